#include "heatflow/verify.hpp"

#include <cmath>
#include <stdexcept>

#include "heatflow/cheb.hpp"
#include "heatflow/errors.hpp"
#include "heatflow/rbd.hpp"

namespace heatflow {

namespace {

double clamp_tau(double tau) { return std::min(1.0, std::max(-1.0, tau)); }

}  // namespace

RolloutResult rollout(const RobotModel& model, const TrajectorySolution& solution, double kp,
                      double kv, double dt) {
  const int n = model.dof();
  const int p = solution.degree();
  const double T = solution.horizon();
  if (p < 1 || solution.node_states.rows() != p + 1 || solution.node_states.cols() != 2 * n ||
      solution.node_controls.rows() != p + 1 || solution.node_controls.cols() != n)
    throw std::invalid_argument("solution node data does not match the model");
  if (!(dt > 0.0)) throw std::invalid_argument("rollout dt must be positive");
  if (dt > T) throw std::invalid_argument("rollout dt exceeds the trajectory horizon");

  ChebGrid cheb = make_grid(p, T);
  if ((cheb.times() - solution.node_times).lpNorm<Eigen::Infinity>() > 1e-9 * (1.0 + T))
    throw std::invalid_argument("solution node times are not a Chebyshev grid on [0, T]");

  auto reference = [&](double t) {
    double tau = clamp_tau(2.0 * t / T - 1.0);
    return std::make_pair(interpolate(cheb.nodes, solution.node_states, tau),
                          interpolate(cheb.nodes, solution.node_controls, tau));
  };
  auto controller = [&](double t, const VecX& q, const VecX& v) {
    auto [xs, us] = reference(t);
    return VecX(us + kp * (xs.head(n) - q) + kv * (xs.tail(n) - v));
  };

  const int steps = std::max(1, static_cast<int>(std::round(T / dt)));
  const double h = T / steps;

  RolloutResult out;
  out.times.resize(steps + 1);
  out.states.resize(steps + 1, 2 * n);
  out.inputs_fb.resize(steps + 1, n);

  VecX q = solution.node_states.row(0).head(n).transpose();
  VecX v = solution.node_states.row(0).tail(n).transpose();

  auto accel = [&](double t, const VecX& qq, const VecX& vv) {
    return VecX(aba(model, qq, vv, controller(t, qq, vv)));
  };

  for (int i = 0; i <= steps; ++i) {
    double t = i * h;
    out.times(i) = t;
    out.states.row(i) << q.transpose(), v.transpose();
    out.inputs_fb.row(i) = controller(t, q, v).transpose();
    if (!q.allFinite() || !v.allFinite())
      throw Diverged("rollout state became non-finite at t = " + std::to_string(t));
    if (i == steps) break;

    VecX k1q = v, k1v = accel(t, q, v);
    VecX k2q = v + 0.5 * h * k1v, k2v = accel(t + 0.5 * h, q + 0.5 * h * k1q, k2q);
    VecX k3q = v + 0.5 * h * k2v, k3v = accel(t + 0.5 * h, q + 0.5 * h * k2q, k3q);
    VecX k4q = v + h * k3v, k4v = accel(t + h, q + h * k3q, k4q);
    q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  }

  double energy = 0.0;
  for (int i = 0; i < steps; ++i)
    energy += 0.5 * h * (out.inputs_fb.row(i).squaredNorm() + out.inputs_fb.row(i + 1).squaredNorm());
  out.control_energy = energy;
  out.final_error_inf = (out.states.bottomRows(1) - solution.node_states.bottomRows(1))
                            .cwiseAbs()
                            .maxCoeff();
  return out;
}

SuccessReport success_check(const RolloutResult& result, const VecX& xf, double epsilon,
                            const RobotModel& model, const ObstacleSet& obstacles,
                            double check_dt) {
  if (!(check_dt > 0.0)) throw std::invalid_argument("check_dt must be positive");
  const int n = model.dof();
  const Eigen::Index m = result.times.size();
  if (m < 2) throw std::invalid_argument("rollout has too few samples");
  const double T = result.times(m - 1);
  const double h = result.times(1) - result.times(0);

  if (xf.size() != result.states.cols())
    throw std::invalid_argument("goal state size does not match rollout state size");

  SuccessReport report;
  report.final_error_inf =
      (result.states.bottomRows(1) - xf.transpose()).cwiseAbs().maxCoeff();
  report.epsilon = epsilon;

  if (obstacles.active()) {
    // closed sampling interval: t = 0, check_dt, ..., and always T itself
    std::vector<double> samples;
    for (double t = 0.0; t < T - 1e-12; t += check_dt) samples.push_back(t);
    samples.push_back(T);

    for (double t : samples) {
      double x = t / h;
      Eigen::Index i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(x), m - 2);
      double a = std::min(1.0, std::max(0.0, x - static_cast<double>(i0)));
      VecX state = ((1.0 - a) * result.states.row(i0) + a * result.states.row(i0 + 1)).transpose();
      VecX g = constraint_value(state.head(n), model, obstacles);
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        if (g(j) > 0.0) {  // strictly inside a sphere
          report.collision_free = false;
          CollisionEvent ev;
          ev.time = t;
          ev.frame = obstacles.frames[static_cast<std::size_t>(j) / obstacles.spheres.size()];
          ev.sphere = static_cast<int>(static_cast<std::size_t>(j) % obstacles.spheres.size());
          report.first_collision = ev;
          break;
        }
      }
      if (!report.collision_free) break;
    }
  }

  report.success = (report.final_error_inf < epsilon) && report.collision_free;
  return report;
}

MatX interpolate_solution(const HomotopyGrid& grid, const MatX& controls, const ChebGrid& cheb,
                          const VecX& times) {
  const Eigen::Index m = times.size();
  const VecX node_times = cheb.times();
  MatX out(m, grid.values.cols() + controls.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    // exact node-time hits return the stored rows bit-for-bit; the t -> tau
    // mapping cannot be relied on to reproduce the node tau exactly
    Eigen::Index hit = -1;
    for (Eigen::Index j = 0; j < node_times.size(); ++j)
      if (times(i) == node_times(j)) {
        hit = j;
        break;
      }
    if (hit >= 0) {
      out.row(i) << grid.values.row(hit), controls.row(hit);
      continue;
    }
    double tau = 2.0 * times(i) / cheb.T - 1.0;
    out.row(i) << interpolate(cheb.nodes, grid.values, tau).transpose(),
        interpolate(cheb.nodes, controls, tau).transpose();
  }
  return out;
}

}  // namespace heatflow

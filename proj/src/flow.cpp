#include "heatflow/flow.hpp"

#include <cmath>
#include <stdexcept>

#include "heatflow/errors.hpp"

namespace heatflow {

namespace {

bool all_finite(const MatX& m) { return m.allFinite(); }

double action_of(const MatX& interior, const AghfContext& ctx) {
  HomotopyGrid g;
  g.values = assemble_full_grid(interior, ctx);
  return action_functional(g, *ctx.cheb, *ctx.model, ctx.params, ctx.obstacles);
}

double control_energy_of(const MatX& interior, const AghfContext& ctx) {
  HomotopyGrid g;
  g.values = assemble_full_grid(interior, ctx);
  MatX U = extract_controls(g, *ctx.cheb, *ctx.model);
  double acc = 0.0;
  for (int i = 0; i <= ctx.cheb->p; ++i) acc += ctx.cheb->weights(i) * U.row(i).squaredNorm();
  return 0.5 * ctx.cheb->T * acc;
}

/// One implicit-Euler step: solves y = base + ds * F(y) by Newton.  Returns
/// false on non-convergence or non-finite iterates; y is only meaningful on
/// success.  iterations reports the Newton count actually used.
bool implicit_euler_step(const MatX& base, const MatX& rhs_base, double ds,
                         const AghfContext& ctx, const FlowConfig& config, MatX& y,
                         int& iterations) {
  const Eigen::Index rows = base.rows(), cols = base.cols();
  const Eigen::Index dim = rows * cols;

  auto flatten = [&](const MatX& m) {
    return VecX(Eigen::Map<const VecX>(MatX(m.transpose()).data(), dim));
  };
  auto unflatten = [&](const VecX& v) {
    return MatX(Eigen::Map<const MatX>(v.data(), cols, rows).transpose());
  };

  y = base + ds * rhs_base;  // explicit predictor
  double tol = config.newton_tol * (1.0 + base.cwiseAbs().maxCoeff() +
                                    ds * rhs_base.cwiseAbs().maxCoeff());
  for (iterations = 1; iterations <= config.newton_max_iter; ++iterations) {
    if (!all_finite(y)) return false;
    MatX fy = system_rhs(y, ctx);
    MatX residual = y - base - ds * fy;
    if (residual.cwiseAbs().maxCoeff() < tol) return true;

    MatX J = MatX::Identity(dim, dim) - ds * system_jacobian(y, ctx);
    Eigen::PartialPivLU<MatX> lu(J);
    VecX delta = lu.solve(-flatten(residual));
    if (!delta.allFinite()) return false;
    y += unflatten(delta);
  }
  return false;
}

bool rk4_step(const MatX& base, const MatX& k1, double ds, const AghfContext& ctx, MatX& y) {
  MatX k2 = system_rhs(base + 0.5 * ds * k1, ctx);
  MatX k3 = system_rhs(base + 0.5 * ds * k2, ctx);
  MatX k4 = system_rhs(base + ds * k3, ctx);
  y = base + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  return all_finite(y);
}

}  // namespace

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Steady: return "steady";
    case StopReason::SMax: return "s_max";
    case StopReason::Diverged: return "diverged";
    case StopReason::StepUnderflow: return "step_underflow";
  }
  return "unknown";
}

HomotopyGrid initial_curve(const VecX& x0, const VecX& xf, const ChebGrid& cheb) {
  if (x0.size() != xf.size()) throw std::invalid_argument("boundary states differ in size");
  HomotopyGrid grid;
  grid.values.resize(cheb.p + 1, x0.size());
  for (int i = 0; i <= cheb.p; ++i) {
    double a = 0.5 * (cheb.nodes(i) + 1.0);
    grid.values.row(i) = (x0 + a * (xf - x0)).transpose();
  }
  grid.values.row(0) = x0.transpose();
  grid.values.row(cheb.p) = xf.transpose();
  return grid;
}

HomotopyGrid initial_curve(const VecX& x0, const VecX& xf, const ChebGrid& cheb,
                           const VecX& user_taus, const MatX& user_values) {
  if (user_taus.size() != user_values.rows() || user_taus.size() < 2)
    throw std::invalid_argument("user curve needs one row of values per tau, at least two");
  if (user_values.cols() != x0.size())
    throw std::invalid_argument("user curve width does not match the boundary states");

  const Eigen::Index last = user_taus.size() - 1;
  if ((user_values.row(0).transpose() - x0).lpNorm<Eigen::Infinity>() > 1e-9 ||
      (user_values.row(last).transpose() - xf).lpNorm<Eigen::Infinity>() > 1e-9)
    throw BoundaryMismatch("user curve endpoints do not match the boundary states");

  HomotopyGrid grid;
  grid.values.resize(cheb.p + 1, x0.size());
  for (int i = 0; i <= cheb.p; ++i) {
    double tau = cheb.nodes(i);
    Eigen::Index seg = 0;
    while (seg + 1 < last && user_taus(seg + 1) < tau) ++seg;
    double t0 = user_taus(seg), t1 = user_taus(seg + 1);
    double a = (t1 > t0) ? std::clamp((tau - t0) / (t1 - t0), 0.0, 1.0) : 0.0;
    grid.values.row(i) = (1.0 - a) * user_values.row(seg) + a * user_values.row(seg + 1);
  }
  grid.values.row(0) = x0.transpose();
  grid.values.row(cheb.p) = xf.transpose();
  return grid;
}

FlowResult evolve(const HomotopyGrid& grid0, const AghfContext& ctx, const FlowConfig& config) {
  validate_params(ctx.params);
  const int p = ctx.cheb->p;
  if (grid0.values.rows() != p + 1 || grid0.values.cols() != 2 * ctx.dof())
    throw std::invalid_argument("grid shape does not match context");
  if ((grid0.values.row(0).transpose() - ctx.x0).lpNorm<Eigen::Infinity>() != 0.0 ||
      (grid0.values.row(p).transpose() - ctx.xf).lpNorm<Eigen::Infinity>() != 0.0)
    throw BoundaryMismatch("initial grid boundary rows must equal the boundary states");

  const bool implicit = config.method == "implicit-euler";
  if (!implicit && config.method != "explicit-rk4")
    throw std::invalid_argument("unknown flow method: " + config.method);

  const double s_max = ctx.params.s_max;
  double ds_max = config.ds_max > 0 ? config.ds_max : s_max;
  double ds = config.ds_init > 0 ? config.ds_init : s_max / 100.0;
  ds = std::clamp(ds, config.ds_min, ds_max);

  FlowResult result;
  MatX interior = grid0.values.middleRows(1, p - 1);

  MatX rhs = system_rhs(interior, ctx);
  double rhs_norm = rhs.cwiseAbs().maxCoeff();
  const double steady_tol =
      config.steady_tol > 0 ? config.steady_tol : 1e-6 * (1.0 + rhs_norm);

  double s = 0.0;
  double action = action_of(interior, ctx);
  auto log_state = [&](bool accepted) {
    result.records.push_back(
        {s, action, control_energy_of(interior, ctx), rhs_norm, accepted});
  };
  auto log_rejected = [&] {
    result.records.push_back({s, action, result.records.empty()
                                             ? control_energy_of(interior, ctx)
                                             : result.records.back().control_energy,
                              rhs_norm, false});
  };
  log_state(true);

  auto finish = [&](StopReason reason) {
    result.grid.values = assemble_full_grid(interior, ctx);
    result.s_end = s;
    result.stop_reason = reason;
    return result;
  };

  if (rhs_norm < steady_tol) return finish(StopReason::Steady);

  long accepted_steps = 0;
  int consecutive_accepts = 0;
  while (s < s_max) {
    double ds_step = std::min(ds, s_max - s);
    MatX y;
    int newton_iters = 0;
    bool ok = implicit
                  ? implicit_euler_step(interior, rhs, ds_step, ctx, config, y, newton_iters)
                  : rk4_step(interior, rhs, ds_step, ctx, y);

    double action_new = 0.0;
    if (ok) {
      action_new = action_of(y, ctx);
      // The continuous flow is a gradient descent of the action, so a
      // discrete step that increases it has overshot.
      if (!std::isfinite(action_new) || action_new > action * (1.0 + 1e-9) + 1e-13) ok = false;
    }

    if (!ok) {
      if (!all_finite(interior)) return finish(StopReason::Diverged);
      log_rejected();
      consecutive_accepts = 0;
      ds = ds_step / 2.0;
      if (ds < config.ds_min) return finish(StopReason::StepUnderflow);
      continue;
    }

    interior = y;
    s += ds_step;
    action = action_new;
    rhs = system_rhs(interior, ctx);
    rhs_norm = rhs.cwiseAbs().maxCoeff();
    if (!std::isfinite(rhs_norm)) return finish(StopReason::Diverged);
    ++accepted_steps;

    bool steady = rhs_norm < steady_tol;
    if (accepted_steps % std::max(1, config.log_every) == 0 || steady || s >= s_max)
      log_state(true);
    if (steady) return finish(StopReason::Steady);

    // Regrow only after back-to-back accepts; a lone accept right after a
    // rejection usually means the step size is still riding the stability edge.
    ++consecutive_accepts;
    if (consecutive_accepts >= 2 && (!implicit || newton_iters <= 5))
      ds = std::min(ds_step * 1.5, ds_max);
  }
  return finish(StopReason::SMax);
}

}  // namespace heatflow

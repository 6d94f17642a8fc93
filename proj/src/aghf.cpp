#include "heatflow/aghf.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "heatflow/errors.hpp"

namespace heatflow {

namespace {

/// Two solves against the Cholesky factor give the (H^T H)^{-1} action.
VecX squared_solve(const Eigen::LLT<MatX>& llt, const VecX& u) {
  return llt.solve(llt.solve(u));
}

MatX squared_solve(const Eigen::LLT<MatX>& llt, const MatX& u) {
  return llt.solve(llt.solve(u));
}

Eigen::LLT<MatX> factorize(const MatX& H) {
  Eigen::LLT<MatX> llt(H);
  if (llt.info() != Eigen::Success)
    throw SingularMass("mass matrix is not positive definite");
  return llt;
}

void check_point(const StatePoint& point, int n) {
  if (point.X.size() != 2 * n || point.Xd.size() != 2 * n || point.Xdd.size() != 2 * n)
    throw std::invalid_argument("state point dimension does not match the model");
}

/// Runs fn(i) for i in [0, count), optionally across threads on contiguous
/// chunks.  Exceptions are re-thrown for the lowest failing index so the
/// reported node never depends on scheduling.
template <typename Fn>
void run_over_nodes(int count, int threads, Fn&& fn) {
  if (threads == 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = std::min(threads, count);

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(std::max(count, 1)));
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
        break;
      }
    }
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int c = 0; c < threads; ++c) {
      int begin = count * c / threads;
      int end = count * (c + 1) / threads;
      pool.emplace_back([&, begin, end] {
        for (int i = begin; i < end; ++i) {
          try {
            fn(i);
          } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (int i = 0; i < count; ++i)
    if (errors[static_cast<std::size_t>(i)]) std::rethrow_exception(errors[static_cast<std::size_t>(i)]);
}

}  // namespace

void validate_params(const AghfParams& params) {
  if (!(params.k > 0)) throw std::invalid_argument("k must be > 0");
  if (params.p < 2) throw std::invalid_argument("p must be >= 2");
  if (!(params.s_max > 0)) throw std::invalid_argument("s_max must be > 0");
  if (params.k_cons < 0) throw std::invalid_argument("k_cons must be >= 0");
  if (params.c_cons < 0) throw std::invalid_argument("c_cons must be >= 0");
}

double smooth_step(double x, double c) { return 0.5 + 0.5 * std::tanh(c * x); }

double smooth_step_d1(double x, double c) {
  double th = std::tanh(c * x);
  return 0.5 * c * (1.0 - th * th);
}

double smooth_step_d2(double x, double c) {
  double th = std::tanh(c * x);
  return -c * c * th * (1.0 - th * th);
}

double penalty_term(double g, double k_cons, double c_cons) {
  return k_cons * g * g * smooth_step(g, c_cons);
}

VecX metric_apply_inverse(const MatX& H, double k, const VecX& w) {
  const int n = static_cast<int>(H.rows());
  if (w.size() != 2 * n) throw std::invalid_argument("metric argument must have length 2N");
  auto llt = factorize(H);
  VecX out(2 * n);
  out.head(n) = w.head(n) / k;
  out.tail(n) = squared_solve(llt, VecX(w.tail(n)));
  return out;
}

double lagrangian(const StatePoint& point, const DynamicsWorkspace& ws, double k) {
  const int n = ws.n;
  check_point(point, n);
  VecX r_top = point.Xd.head(n) - point.X.tail(n);
  VecX r_bot = point.Xd.tail(n) - ws.FD0;
  return k * r_top.squaredNorm() + (ws.H * r_bot).squaredNorm();
}

VecX omega(const StatePoint& point, const RobotModel& model, double k) {
  const int n = model.dof();
  check_point(point, n);
  VecX q = point.X.head(n), v = point.X.tail(n);
  VecX vq = point.Xd.head(n), vv = point.Xd.tail(n);
  VecX aq = point.Xdd.head(n), av = point.Xdd.tail(n);

  MatX H, Hdot;
  crba_d(model, q, vq, H, Hdot);
  auto llt = factorize(H);

  VecX C = rnea(model, q, v, VecX::Zero(n));
  MatX dC_dq, dC_dv;
  rnea_d(model, q, v, VecX::Zero(n), dC_dq, dC_dv);
  VecX Cdot = dC_dq * vq + dC_dv * vv;

  VecX FD0;
  MatX dFD_dq, dFD_dv, Hinv;
  aba_d(model, q, v, VecX::Zero(n), FD0, dFD_dq, dFD_dv, Hinv);

  VecX w = vv - FD0;
  VecX Hw = H * w;
  VecX z = 2.0 * (H * VecX(C + H * vv));
  MatX M = mass_matrix_dq_action(model, q, w);
  VecX gamma = Hdot * (H * vv).eval() + H * (Hdot * vv).eval() + H * (H * av).eval() +
               Hdot * C + H * Cdot;

  VecX out(2 * n);
  out.head(n) = 2.0 * (aq - vv) + (dFD_dq.transpose() * z) / k - 2.0 / k * (M.transpose() * Hw);
  out.tail(n) = squared_solve(llt, VecX(2.0 * gamma + dFD_dv.transpose() * z + 2.0 * k * (vq - v)));
  return out;
}

void omega_jacobian(const StatePoint& point, const RobotModel& model, double k,
                    MatX& dOmega_dX, MatX& dOmega_dXd, MatX& dOmega_dXdd) {
  DynamicsWorkspace ws(model.dof());
  omega_jacobian(point, model, k, dOmega_dX, dOmega_dXd, dOmega_dXdd, ws);
}

void omega_jacobian(const StatePoint& point, const RobotModel& model, double k,
                    MatX& dOmega_dX, MatX& dOmega_dXd, MatX& dOmega_dXdd,
                    DynamicsWorkspace& ws) {
  const int n = model.dof();
  check_point(point, n);
  VecX q = point.X.head(n), v = point.X.tail(n);
  VecX vq = point.Xd.head(n), vv = point.Xd.tail(n);
  VecX av = point.Xdd.tail(n);

  fill_workspace(model, q, v, vq, vv, ws);
  auto llt = factorize(ws.H);
  const MatX& H = ws.H;
  const MatX& Hd = ws.Hdot;

  VecX w = vv - ws.FD0;
  VecX Hw = H * w;
  VecX zp = 2.0 * (ws.C + H * vv);  // z = H * zp
  VecX z = H * zp;

  MatX M(n, n), P(n, n), A(n, n);
  for (int j = 0; j < n; ++j) {
    auto dHj = ws.dH_dq.slice_last(j);
    M.col(j) = dHj * w;
    P.col(j) = dHj * Hw;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = w.dot(ws.d2H_dq2.slice(i, j) * Hw);
  MatX Q = P.transpose() + M.transpose() * H;

  VecX gamma = Hd * (H * vv).eval() + H * (Hd * vv).eval() + H * (H * av).eval() +
               Hd * ws.C + H * ws.Cdot;
  VecX alpha2 = -(ws.dFD_dv.transpose() * z);
  VecX y = squared_solve(llt, gamma);
  VecX y2 = squared_solve(llt, alpha2);
  VecX y3 = squared_solve(llt, VecX(vq - v));

  // column j of d[(H^2)^{-1} s]/dq for fixed s, expressed via u = (H^2)^{-1} s
  auto dinv = [&](const VecX& u) {
    MatX cols(n, n);
    VecX hu = H * u;
    for (int j = 0; j < n; ++j) {
      auto dHj = ws.dH_dq.slice_last(j);
      cols.col(j) = dHj * hu + H * (dHj * u).eval();
    }
    return MatX(-squared_solve(llt, cols));
  };

  VecX u1 = H * vv + ws.C;
  VecX u2 = Hd * vv + H * av + ws.Cdot;
  MatX dgamma_dq(n, n), dgamma_dvq(n, n), Wq(n, n);
  for (int j = 0; j < n; ++j) {
    auto dHj = ws.dH_dq.slice_last(j);
    auto dHdj = ws.dHdot_dq.slice_last(j);
    dgamma_dq.col(j) = dHdj * u1 + dHj * u2 + Hd * (dHj * vv + ws.dC_dq.col(j)).eval() +
                       H * (dHdj * vv + dHj * av + ws.dCdot_dq.col(j)).eval();
    dgamma_dvq.col(j) = dHj * u1 + H * (dHj * vv + ws.dC_dq.col(j)).eval();
    Wq.col(j) = dHj * zp + 2.0 * (H * (ws.dC_dq.col(j) + dHj * vv).eval());
  }
  MatX dgamma_dv = Hd * ws.dC_dv + H * ws.dCdot_dv;
  MatX dgamma_dvv = Hd * H + H * (Hd + ws.dC_dv);

  MatX HdCv = H * ws.dC_dv;
  MatX H2 = H * H;
  MatX cf_qdv = ws.d2FD_dqdv.contract_first(z);
  MatX dalpha1_dq = -ws.d2FD_dq2.contract_first(z) - ws.dFD_dq.transpose() * Wq;
  MatX dalpha1_dv = -cf_qdv - 2.0 * ws.dFD_dq.transpose() * HdCv;
  MatX dalpha2_dq = -cf_qdv.transpose() - ws.dFD_dv.transpose() * Wq;
  MatX dalpha2_dv = -ws.d2FD_dv2.contract_first(z) - 2.0 * ws.dFD_dv.transpose() * HdCv;

  MatX dGam_dq = A + M.transpose() * M - Q * ws.dFD_dq;
  MatX dGam_dv = -Q * ws.dFD_dv;

  MatX Hsq_inv = squared_solve(llt, MatX(MatX::Identity(n, n)));

  dOmega_dX.setZero(2 * n, 2 * n);
  dOmega_dX.topLeftCorner(n, n) = -dalpha1_dq / k - 2.0 / k * dGam_dq;
  dOmega_dX.topRightCorner(n, n) = -dalpha1_dv / k - 2.0 / k * dGam_dv;
  dOmega_dX.bottomLeftCorner(n, n) =
      2.0 * (dinv(y) + squared_solve(llt, dgamma_dq)) -
      (dinv(y2) + squared_solve(llt, dalpha2_dq)) + 2.0 * k * dinv(y3);
  dOmega_dX.bottomRightCorner(n, n) =
      2.0 * squared_solve(llt, dgamma_dv) - squared_solve(llt, dalpha2_dv) - 2.0 * k * Hsq_inv;

  dOmega_dXd.setZero(2 * n, 2 * n);
  dOmega_dXd.topRightCorner(n, n) =
      -2.0 * MatX::Identity(n, n) + 2.0 / k * (ws.dFD_dq.transpose() * H2) - 2.0 / k * Q;
  dOmega_dXd.bottomLeftCorner(n, n) = 2.0 * squared_solve(llt, dgamma_dvq) + 2.0 * k * Hsq_inv;
  dOmega_dXd.bottomRightCorner(n, n) =
      2.0 * squared_solve(llt, dgamma_dvv) +
      2.0 * squared_solve(llt, MatX(ws.dFD_dv.transpose() * H2));

  dOmega_dXdd.setZero(2 * n, 2 * n);
  dOmega_dXdd.diagonal().setConstant(2.0);
}

VecX constraint_value(const VecX& q, const RobotModel& model, const ObstacleSet& obstacles) {
  const auto nf = obstacles.frames.size();
  const auto ns = obstacles.spheres.size();
  VecX g(static_cast<Eigen::Index>(nf * ns));
  auto poses = forward_kinematics(model, q);
  Eigen::Index idx = 0;
  for (int frame : obstacles.frames) {
    const Vec3& pos = poses.at(static_cast<std::size_t>(frame)).position;
    for (const auto& sphere : obstacles.spheres)
      g(idx++) = sphere.radius - (pos - sphere.center).norm();
  }
  return g;
}

MatX constraint_gradient(const VecX& q, const RobotModel& model, const ObstacleSet& obstacles) {
  const int n = model.dof();
  const auto nf = obstacles.frames.size();
  const auto ns = obstacles.spheres.size();
  MatX grad = MatX::Zero(n, static_cast<Eigen::Index>(nf * ns));
  auto poses = forward_kinematics(model, q);
  Eigen::Index idx = 0;
  for (int frame : obstacles.frames) {
    const Vec3& pos = poses.at(static_cast<std::size_t>(frame)).position;
    MatX J = frame_jacobian(model, q, frame);
    for (const auto& sphere : obstacles.spheres) {
      Vec3 delta = pos - sphere.center;
      double dist = delta.norm();
      // gradient is undefined at the exact center; the penalty is flat there
      if (dist > 1e-12) grad.col(idx) = -(J.transpose() * delta) / dist;
      ++idx;
    }
  }
  return grad;
}

VecX penalty_rhs(const StatePoint& point, const RobotModel& model, const ObstacleSet& obstacles,
                 double k_cons, double c_cons, const MatX& /*H*/, double k) {
  const int n = model.dof();
  check_point(point, n);
  VecX out = VecX::Zero(2 * n);
  if (!obstacles.active() || k_cons == 0.0) return out;

  VecX q = point.X.head(n);
  VecX g = constraint_value(q, model, obstacles);
  MatX grad = constraint_gradient(q, model, obstacles);
  for (Eigen::Index j = 0; j < g.size(); ++j) {
    double coeff =
        k_cons * (2.0 * g(j) * smooth_step(g(j), c_cons) + g(j) * g(j) * smooth_step_d1(g(j), c_cons));
    out.head(n) -= (coeff / k) * grad.col(j);
  }
  return out;
}

MatX extract_controls(const HomotopyGrid& grid, const ChebGrid& cheb, const RobotModel& model) {
  const int n = model.dof();
  const int rows = static_cast<int>(grid.values.rows());
  if (grid.values.cols() != 2 * n || rows != cheb.p + 1)
    throw std::invalid_argument("grid shape does not match the model and Chebyshev degree");

  MatX Xd = cheb.time_scale() * (cheb.D * grid.values);
  MatX U(rows, n);
  for (int i = 0; i < rows; ++i) {
    VecX q = grid.values.row(i).head(n).transpose();
    VecX v = grid.values.row(i).tail(n).transpose();
    VecX vv = Xd.row(i).tail(n).transpose();
    U.row(i) = (crba(model, q) * vv + rnea(model, q, v, VecX::Zero(n))).transpose();
  }
  return U;
}

double action_functional(const HomotopyGrid& grid, const ChebGrid& cheb, const RobotModel& model,
                         const AghfParams& params, const ObstacleSet& obstacles) {
  const int n = model.dof();
  MatX Xd = cheb.time_scale() * (cheb.D * grid.values);
  double acc = 0.0;
  for (int i = 0; i <= cheb.p; ++i) {
    VecX q = grid.values.row(i).head(n).transpose();
    VecX v = grid.values.row(i).tail(n).transpose();
    VecX dq = Xd.row(i).head(n).transpose();
    VecX dv = Xd.row(i).tail(n).transpose();
    VecX resid = crba(model, q) * dv + rnea(model, q, v, VecX::Zero(n));
    double L = params.k * (dq - v).squaredNorm() + resid.squaredNorm();
    if (obstacles.active() && params.k_cons > 0) {
      VecX g = constraint_value(q, model, obstacles);
      for (Eigen::Index j = 0; j < g.size(); ++j)
        L += penalty_term(g(j), params.k_cons, params.c_cons);
    }
    acc += cheb.weights(i) * L;
  }
  return 0.5 * cheb.T * acc;
}

MatX assemble_full_grid(const MatX& interior, const AghfContext& ctx) {
  const int n = ctx.dof();
  const int p = ctx.cheb->p;
  if (interior.rows() != p - 1 || interior.cols() != 2 * n)
    throw std::invalid_argument("interior grid must be (p-1) x 2N");
  MatX full(p + 1, 2 * n);
  full.row(0) = ctx.x0.transpose();
  full.middleRows(1, p - 1) = interior;
  full.row(p) = ctx.xf.transpose();
  return full;
}

MatX system_rhs(const MatX& interior, const AghfContext& ctx) {
  const int n = ctx.dof();
  const int p = ctx.cheb->p;
  const double ts = ctx.cheb->time_scale();
  MatX full = assemble_full_grid(interior, ctx);
  MatX Xd = ts * (ctx.cheb->D * full);
  MatX Xdd = ts * ts * (ctx.cheb->D2 * full);

  MatX out(p - 1, 2 * n);
  run_over_nodes(p - 1, ctx.threads, [&](int r) {
    const int node = r + 1;
    StatePoint pt{full.row(node).transpose(), Xd.row(node).transpose(),
                  Xdd.row(node).transpose()};
    try {
      VecX val = omega(pt, *ctx.model, ctx.params.k);
      if (ctx.obstacles.active() && ctx.params.k_cons > 0)
        val += penalty_rhs(pt, *ctx.model, ctx.obstacles, ctx.params.k_cons, ctx.params.c_cons,
                           MatX(), ctx.params.k);
      out.row(r) = val.transpose();
    } catch (const SingularMass& e) {
      throw SingularMass("node " + std::to_string(node) + ": " + e.what());
    }
  });
  return out;
}

MatX system_jacobian(const MatX& interior, const AghfContext& ctx) {
  const int n = ctx.dof();
  const int p = ctx.cheb->p;
  const int m = 2 * n;
  const double ts = ctx.cheb->time_scale();
  MatX full = assemble_full_grid(interior, ctx);
  MatX Xd = ts * (ctx.cheb->D * full);
  MatX Xdd = ts * ts * (ctx.cheb->D2 * full);

  MatX out = MatX::Zero((p - 1) * m, (p - 1) * m);
  run_over_nodes(p - 1, ctx.threads, [&](int r) {
    const int node = r + 1;
    StatePoint pt{full.row(node).transpose(), Xd.row(node).transpose(),
                  Xdd.row(node).transpose()};
    MatX dX, dXd, dXdd;
    try {
      omega_jacobian(pt, *ctx.model, ctx.params.k, dX, dXd, dXdd);
    } catch (const SingularMass& e) {
      throw SingularMass("node " + std::to_string(node) + ": " + e.what());
    }

    if (ctx.obstacles.active() && ctx.params.k_cons > 0) {
      // Gauss-Newton curvature of the penalty: first-order in the constraint
      // gradient, second kinematics derivatives deliberately dropped.
      VecX q = pt.X.head(n);
      VecX g = constraint_value(q, *ctx.model, ctx.obstacles);
      MatX grad = constraint_gradient(q, *ctx.model, ctx.obstacles);
      for (Eigen::Index j = 0; j < g.size(); ++j) {
        double c = ctx.params.c_cons;
        double coeff = ctx.params.k_cons *
                       (2.0 * smooth_step(g(j), c) + 4.0 * g(j) * smooth_step_d1(g(j), c) +
                        g(j) * g(j) * smooth_step_d2(g(j), c));
        dX.topLeftCorner(n, n) -= (coeff / ctx.params.k) * (grad.col(j) * grad.col(j).transpose());
      }
    }

    for (int jn = 1; jn < p; ++jn) {
      auto block = out.block(r * m, (jn - 1) * m, m, m);
      block = dXd * (ts * ctx.cheb->D(node, jn));
      block.diagonal().array() += 2.0 * ts * ts * ctx.cheb->D2(node, jn);
      if (jn == node) block += dX;
    }
  });
  return out;
}

}  // namespace heatflow

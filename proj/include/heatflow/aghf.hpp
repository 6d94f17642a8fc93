#pragma once

#include <optional>
#include <vector>

#include "heatflow/cheb.hpp"
#include "heatflow/model.hpp"
#include "heatflow/rbd.hpp"
#include "heatflow/types.hpp"

namespace heatflow {

/// Parameters of the homotopy flow.  k weights the velocity-consistency
/// penalty in the metric, p is the Chebyshev degree of the time grid,
/// s_max the flow horizon, and (k_cons, c_cons) shape the obstacle penalty.
struct AghfParams {
  double k = 1e4;
  double s_max = 1.0;
  int p = 8;
  double k_cons = 0.0;
  double c_cons = 1.0;
};

/// Throws std::invalid_argument naming the offending field.
void validate_params(const AghfParams& params);

/// The evolving curve: row i holds X(t_i)^T, rows 0 and p stay pinned to the
/// boundary states for the whole flow.
struct HomotopyGrid {
  MatX values;  // (p+1) x 2N
};

struct SphereObstacle {
  Vec3 center;
  double radius;
};

/// Sphere obstacles plus the model frames that must stay outside them.
struct ObstacleSet {
  std::vector<SphereObstacle> spheres;
  std::vector<int> frames;

  bool active() const { return !spheres.empty() && !frames.empty(); }
};

/// State and its first two physical-time derivatives at one grid node.
struct StatePoint {
  VecX X;    // (q, qdot), length 2N
  VecX Xd;   // dX/dt
  VecX Xdd;  // d2X/dt2
};

/// Smooth step S(x) = 1/2 + tanh(c x)/2 and its first two derivatives.
double smooth_step(double x, double c);
double smooth_step_d1(double x, double c);
double smooth_step_d2(double x, double c);

/// Penalty b(g) = k_cons * g^2 * S(g; c_cons); nonnegative, zero at g = 0.
double penalty_term(double g, double k_cons, double c_cons);

/// Applies the inverse metric diag(kI, H^T H)^{-1} to w without ever forming
/// (H^T H)^{-1}: the bottom block is obtained from two solves against a
/// Cholesky factorization of H.
VecX metric_apply_inverse(const MatX& H, double k, const VecX& w);

/// Incremental-work Lagrangian k ||Xd_P1 - X_P2||^2 + ||H (Xd_P2 - FD0)||^2,
/// evaluated from a workspace already filled at the point.
double lagrangian(const StatePoint& point, const DynamicsWorkspace& ws, double k);

/// Flow right-hand side: the inverse metric applied to the Euler-Lagrange
/// expression of the Lagrangian, assembled analytically from the dynamics
/// derivative recursions.
VecX omega(const StatePoint& point, const RobotModel& model, double k);

/// Partials of omega with respect to X, Xd and Xdd.  dOmega_dXdd is exactly
/// 2*I (off-diagonal entries are structural zeros).
void omega_jacobian(const StatePoint& point, const RobotModel& model, double k,
                    MatX& dOmega_dX, MatX& dOmega_dXd, MatX& dOmega_dXdd);
void omega_jacobian(const StatePoint& point, const RobotModel& model, double k,
                    MatX& dOmega_dX, MatX& dOmega_dXd, MatX& dOmega_dXdd,
                    DynamicsWorkspace& ws);

/// Signed clearance g = radius - distance(frame, center) for every
/// (frame, sphere) pair, frames outer, spheres inner; positive = violation.
VecX constraint_value(const VecX& q, const RobotModel& model, const ObstacleSet& obstacles);

/// Gradient of g with respect to q for every pair, one column per pair,
/// matching constraint_value ordering.
MatX constraint_gradient(const VecX& q, const RobotModel& model, const ObstacleSet& obstacles);

/// Inverse-metric image of the negative penalty gradient; only the top
/// (position) block is nonzero because g depends on X_P1 alone.
VecX penalty_rhs(const StatePoint& point, const RobotModel& model, const ObstacleSet& obstacles,
                 double k_cons, double c_cons, const MatX& H, double k);

/// Controls recovered from the grid: u(t_i) = H(q_i) Xd_P2(t_i) + C(q_i, v_i).
MatX extract_controls(const HomotopyGrid& grid, const ChebGrid& cheb, const RobotModel& model);

/// Quadrature of the (penalized) Lagrangian along the grid.
double action_functional(const HomotopyGrid& grid, const ChebGrid& cheb, const RobotModel& model,
                         const AghfParams& params, const ObstacleSet& obstacles);

/// Everything a node-stacked evaluation needs.
struct AghfContext {
  const RobotModel* model = nullptr;
  const ChebGrid* cheb = nullptr;
  AghfParams params;
  ObstacleSet obstacles;
  VecX x0;  // 2N
  VecX xf;  // 2N
  int threads = 1;  // 0 = all hardware threads

  int dof() const { return model->dof(); }
};

/// Rebuilds the full grid from the interior rows with pinned boundaries.
MatX assemble_full_grid(const MatX& interior, const AghfContext& ctx);

/// d(interior)/ds: per-node omega + penalty at the spectral derivatives of
/// the reassembled grid.  Rows are independent; evaluation order never
/// changes the result.
MatX system_rhs(const MatX& interior, const AghfContext& ctx);

/// Jacobian of system_rhs with respect to the stacked interior unknowns
/// (row-major stacking: unknown index = (i-1)*2N + component).
MatX system_jacobian(const MatX& interior, const AghfContext& ctx);

}  // namespace heatflow

#pragma once

#include <string>
#include <vector>

#include "heatflow/aghf.hpp"
#include "heatflow/cheb.hpp"
#include "heatflow/types.hpp"

namespace heatflow {

enum class StopReason { Steady, SMax, Diverged, StepUnderflow };

const char* to_string(StopReason reason);

/// Integrator settings for the homotopy flow.  Zero-valued entries of
/// ds_init, ds_max and steady_tol are replaced by the documented defaults
/// (s_max/100, s_max, and 1e-6*(1+||rhs(0)||_inf)).
struct FlowConfig {
  std::string method = "implicit-euler";  // or "explicit-rk4"
  double ds_init = 0.0;
  double ds_min = 1e-10;
  double ds_max = 0.0;
  double newton_tol = 1e-9;
  int newton_max_iter = 25;
  double steady_tol = 0.0;
  int log_every = 1;
};

struct ConvergenceRecord {
  double s = 0.0;
  double action = 0.0;
  double control_energy = 0.0;
  double rhs_inf_norm = 0.0;
  bool step_accepted = true;
};

struct FlowResult {
  HomotopyGrid grid;
  std::vector<ConvergenceRecord> records;
  double s_end = 0.0;
  StopReason stop_reason = StopReason::SMax;
};

/// Straight line between the boundary states, sampled at the Chebyshev nodes.
HomotopyGrid initial_curve(const VecX& x0, const VecX& xf, const ChebGrid& cheb);

/// User-supplied curve given as samples (taus ascending in [-1, 1], one row of
/// user_values per tau), resampled onto the grid by linear interpolation.
/// Throws BoundaryMismatch if the curve's endpoints disagree with x0/xf
/// beyond 1e-9; the boundary rows of the result are set to x0/xf exactly.
HomotopyGrid initial_curve(const VecX& x0, const VecX& xf, const ChebGrid& cheb,
                           const VecX& user_taus, const MatX& user_values);

/// Integrates d(psi)/ds = system_rhs from s = 0 toward params.s_max.
/// Implicit Euler solves (I - ds J) delta = ds rhs by Newton with the
/// analytic Jacobian and adapts ds (halve on failure, grow 1.5x on easy
/// success); a step is also rejected if it increases the action beyond a
/// 1e-9 relative slack, which keeps the logged action sequence monotone.
/// Stops early with Steady when ||rhs||_inf falls under steady_tol, with
/// Diverged on non-finite state, or StepUnderflow when ds cannot shrink
/// further.  Boundary rows are never touched.
FlowResult evolve(const HomotopyGrid& grid0, const AghfContext& ctx, const FlowConfig& config);

}  // namespace heatflow

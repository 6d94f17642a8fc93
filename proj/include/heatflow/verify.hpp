#pragma once

#include <optional>

#include "heatflow/aghf.hpp"
#include "heatflow/model.hpp"
#include "heatflow/solution.hpp"
#include "heatflow/types.hpp"

namespace heatflow {

/// Closed-loop simulation of a solved trajectory.
struct RolloutResult {
  VecX times;        // M samples, 0 to T inclusive
  MatX states;       // M x 2N
  MatX inputs_fb;    // M x N, the applied feedback-corrected torques
  double control_energy = 0.0;    // trapezoid estimate of integral ||U_fb||^2 dt
  double final_error_inf = 0.0;   // vs the solution's final node state
};

struct CollisionEvent {
  double time = 0.0;
  int frame = -1;   // model frame index
  int sphere = -1;  // index into ObstacleSet::spheres
};

struct SuccessReport {
  bool success = false;
  double final_error_inf = 0.0;  // rollout end vs the scenario goal state
  double epsilon = 0.0;
  bool collision_free = true;
  std::optional<CollisionEvent> first_collision;
};

/// Integrates qdd = forward dynamics under the tracking controller
/// u*(t) + kp (X*_P1 - q) + kv (X*_P2 - v) with fixed-step RK4 from the
/// solution's first node state.  The reference X*, u* are Chebyshev
/// interpolants of the node data.  Throws Diverged on non-finite states and
/// std::invalid_argument when dt is non-positive or exceeds the horizon.
RolloutResult rollout(const RobotModel& model, const TrajectorySolution& solution, double kp,
                      double kv, double dt);

/// Samples the rollout at check_dt resolution (closed interval, endpoint
/// included) and tests every obstacle pair; "inside" is strict, so boundary
/// contact does not fail a run.
SuccessReport success_check(const RolloutResult& result, const VecX& xf, double epsilon,
                            const RobotModel& model, const ObstacleSet& obstacles,
                            double check_dt);

/// Dense output: states and controls interpolated at the given physical
/// times, one row per time, states first.
MatX interpolate_solution(const HomotopyGrid& grid, const MatX& controls, const ChebGrid& cheb,
                          const VecX& times);

}  // namespace heatflow

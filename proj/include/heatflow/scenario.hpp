#pragma once

#include <string>
#include <vector>

#include "heatflow/aghf.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/solution.hpp"
#include "heatflow/types.hpp"
#include "heatflow/verify.hpp"

namespace heatflow {

/// A parsed scenario: boundary states, horizon, flow parameters, obstacles
/// and verification settings.  `key = value` lines, vectors comma-separated,
/// one optional [obstacle] block per sphere.  Frame names in check_frames are
/// resolved against the model later; an empty list means "all model frames".
struct ScenarioFile {
  std::string model_path;  // optional, commands may override with --model
  VecX x0, xf;
  double T = 0.0;
  AghfParams params;
  std::vector<SphereObstacle> spheres;
  std::vector<std::string> check_frames;
  double kp = 10.0;
  double kv = 10.0;
  double epsilon = 0.05;
  double check_dt = 1e-2;
  double rollout_dt = 1e-3;
  FlowConfig flow;
};

/// Throws ParseError (with line number) on malformed lines and
/// std::invalid_argument when a required key (x0, xf, T, k, p, s_max) is
/// missing or inconsistent.
ScenarioFile parse_scenario(const std::string& text);
ScenarioFile load_scenario(const std::string& path);

/// Serializes with round-trip (17 significant digit) precision.
std::string serialize_scenario(const ScenarioFile& scenario);

/// Trajectory CSV: header t,q1..qN,v1..vN,u1..uN, one row per node.
void write_trajectory_csv(const std::string& path, const TrajectorySolution& solution, int n);
TrajectorySolution read_trajectory_csv(const std::string& path, int n);

/// Convergence CSV: # config comment lines, then
/// s,action,control_energy,rhs_inf_norm,accepted.
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRecord>& records,
                           const std::vector<std::string>& config_comments);

/// Rollout CSV: header t,q1..qN,v1..vN,ufb1..ufbN.
void write_rollout_csv(const std::string& path, const RolloutResult& result, int n);

}  // namespace heatflow

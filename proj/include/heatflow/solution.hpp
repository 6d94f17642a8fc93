#pragma once

#include <vector>

#include "heatflow/flow.hpp"
#include "heatflow/types.hpp"

namespace heatflow {

/// A solved trajectory: node data on the Chebyshev grid plus the convergence
/// history of the flow that produced it.
struct TrajectorySolution {
  VecX node_times;     // (p+1), ascending from 0 to T
  MatX node_states;    // (p+1) x 2N
  MatX node_controls;  // (p+1) x N
  std::vector<ConvergenceRecord> convergence;
  StopReason stop_reason = StopReason::SMax;
  double wall_time = 0.0;  // seconds

  double horizon() const { return node_times(node_times.size() - 1); }
  int degree() const { return static_cast<int>(node_times.size()) - 1; }
};

}  // namespace heatflow

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "heatflow/model.hpp"

namespace heatflow {

/// One line of the derivative-check table: the worst relative error observed
/// for a named quantity over the sampled states, and the bound it must meet.
struct CheckResult {
  std::string name;
  double max_error = 0.0;
  double tol = 0.0;
  bool pass() const { return max_error <= tol; }
};

struct CheckReport {
  std::vector<CheckResult> results;
  bool all_pass() const {
    for (const auto& r : results)
      if (!r.pass()) return false;
    return true;
  }
};

/// Finite-difference validation of every analytic derivative in the library,
/// at randomly sampled states drawn from the given seed.  When tol_override
/// is set it replaces the per-check defaults (first-order 1e-6, second-order
/// 1e-4, flow right-hand side 1e-5).
CheckReport run_derivative_checks(const RobotModel& model, unsigned seed,
                                  std::optional<double> tol_override = {});

struct BenchStat {
  double mean_us = 0.0;
  double stddev_us = 0.0;
};

/// Wall-clock timing of the flow right-hand side and its Jacobian at random
/// states; stddev is zero when samples == 1.
struct BenchReport {
  BenchStat omega;
  BenchStat jacobian;
  int samples = 0;
};

BenchReport run_bench(const RobotModel& model, int samples, unsigned seed = 0);

}  // namespace heatflow

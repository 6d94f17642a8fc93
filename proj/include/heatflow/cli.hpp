#pragma once

namespace heatflow {

/// Full command-line dispatch (solve / verify / check-derivs / bench).
/// Returns the process exit code: 0 success, 1 flow failure, 2 input error,
/// 3 verification failure, 4 derivative-check failure.
int run_cli(int argc, const char* const* argv);

}  // namespace heatflow

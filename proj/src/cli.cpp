#include "heatflow/cli.hpp"

#include <chrono>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "heatflow/aghf.hpp"
#include "heatflow/cheb.hpp"
#include "heatflow/checks.hpp"
#include "heatflow/errors.hpp"
#include "heatflow/flow.hpp"
#include "heatflow/model.hpp"
#include "heatflow/scenario.hpp"
#include "heatflow/solution.hpp"
#include "heatflow/verify.hpp"

namespace heatflow {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFlowFailure = 1;
constexpr int kExitInputError = 2;
constexpr int kExitVerifyFailure = 3;
constexpr int kExitDerivFailure = 4;

void check_dimensions(const RobotModel& model, const ScenarioFile& scenario) {
  const int n2 = 2 * model.dof();
  if (scenario.x0.size() != n2)
    throw std::invalid_argument("scenario x0 has " + std::to_string(scenario.x0.size()) +
                                " entries but the model needs " + std::to_string(n2));
  if (scenario.xf.size() != n2)
    throw std::invalid_argument("scenario xf has " + std::to_string(scenario.xf.size()) +
                                " entries but the model needs " + std::to_string(n2));
}

ObstacleSet resolve_obstacles(const RobotModel& model, const ScenarioFile& scenario) {
  ObstacleSet set;
  if (scenario.spheres.empty()) return set;
  set.spheres = scenario.spheres;
  if (scenario.check_frames.empty()) {
    // no explicit selection: every model frame participates
    for (std::size_t i = 0; i < model.frames.size(); ++i) set.frames.push_back(static_cast<int>(i));
    if (set.frames.empty())
      throw std::invalid_argument("scenario has obstacles but the model defines no frames");
  } else {
    for (const auto& name : scenario.check_frames) {
      int idx = model.frame_index(name);
      if (idx < 0) throw std::invalid_argument("unknown frame '" + name + "' in check_frames");
      set.frames.push_back(idx);
    }
  }
  return set;
}

std::vector<std::string> config_comments(const std::string& model_path,
                                         const ScenarioFile& scenario, int threads) {
  std::vector<std::string> lines;
  lines.push_back("model = " + model_path);
  lines.push_back("threads = " + std::to_string(threads));
  std::stringstream stream(serialize_scenario(scenario));
  std::string line;
  while (std::getline(stream, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

struct SolveArgs {
  std::string model, scenario, out, log;
  int threads = 1;
};

int cmd_solve(const SolveArgs& args) {
  RobotModel model = load_model(args.model);
  ScenarioFile scenario = load_scenario(args.scenario);
  check_dimensions(model, scenario);

  ChebGrid cheb = make_grid(scenario.params.p, scenario.T);
  AghfContext ctx;
  ctx.model = &model;
  ctx.cheb = &cheb;
  ctx.params = scenario.params;
  ctx.obstacles = resolve_obstacles(model, scenario);
  ctx.x0 = scenario.x0;
  ctx.xf = scenario.xf;
  ctx.threads = args.threads;

  HomotopyGrid grid0 = initial_curve(scenario.x0, scenario.xf, cheb);

  FlowResult result;
  auto t0 = std::chrono::steady_clock::now();
  bool flow_threw = false;
  std::string flow_error;
  try {
    result = evolve(grid0, ctx, scenario.flow);
  } catch (const SingularMass& e) {
    flow_threw = true;
    flow_error = e.what();
  } catch (const Diverged& e) {
    flow_threw = true;
    flow_error = e.what();
  }
  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (flow_threw) {
    std::fprintf(stderr, "flow failed: %s\n", flow_error.c_str());
    return kExitFlowFailure;
  }

  TrajectorySolution solution;
  solution.node_times = cheb.times();
  solution.node_states = result.grid.values;
  solution.node_controls = extract_controls(result.grid, cheb, model);
  solution.convergence = result.records;
  solution.stop_reason = result.stop_reason;
  solution.wall_time = wall;

  write_trajectory_csv(args.out, solution, model.dof());
  write_convergence_csv(args.log, result.records,
                        config_comments(args.model, scenario, args.threads));

  const ConvergenceRecord& last = result.records.back();
  std::printf("stop_reason = %s\n", to_string(result.stop_reason));
  std::printf("s_end = %.17g\n", result.s_end);
  std::printf("action = %.17g\n", last.action);
  std::printf("control_energy = %.17g\n", last.control_energy);
  std::printf("rhs_inf_norm = %.17g\n", last.rhs_inf_norm);
  std::printf("wall_time_s = %.3f\n", wall);

  bool ok = result.stop_reason == StopReason::Steady || result.stop_reason == StopReason::SMax;
  return ok ? kExitOk : kExitFlowFailure;
}

struct VerifyArgs {
  std::string model, scenario, traj, out;
};

int cmd_verify(const VerifyArgs& args) {
  RobotModel model = load_model(args.model);
  ScenarioFile scenario = load_scenario(args.scenario);
  check_dimensions(model, scenario);
  TrajectorySolution solution = read_trajectory_csv(args.traj, model.dof());
  ObstacleSet obstacles = resolve_obstacles(model, scenario);

  RolloutResult rolled;
  try {
    rolled = rollout(model, solution, scenario.kp, scenario.kv, scenario.rollout_dt);
  } catch (const Diverged& e) {
    std::fprintf(stderr, "rollout diverged: %s\n", e.what());
    return kExitVerifyFailure;
  }

  SuccessReport report =
      success_check(rolled, scenario.xf, scenario.epsilon, model, obstacles, scenario.check_dt);
  write_rollout_csv(args.out, rolled, model.dof());

  std::printf("final_error_inf = %.17g (epsilon = %.17g)\n", report.final_error_inf,
              report.epsilon);
  std::printf("control_energy = %.17g\n", rolled.control_energy);
  if (obstacles.active()) {
    if (report.collision_free) {
      std::printf("collision_free = yes\n");
    } else {
      const CollisionEvent& hit = *report.first_collision;
      std::printf("collision_free = no (t = %.17g, frame = %s, sphere = %d)\n", hit.time,
                  model.frames[hit.frame].name.c_str(), hit.sphere);
    }
  }
  std::printf("verification = %s\n", report.success ? "PASS" : "FAIL");
  return report.success ? kExitOk : kExitVerifyFailure;
}

struct CheckArgs {
  std::string model;
  unsigned seed = 0;
  std::optional<double> tol;
};

int cmd_check_derivs(const CheckArgs& args) {
  RobotModel model = load_model(args.model);
  CheckReport report = run_derivative_checks(model, args.seed, args.tol);
  std::printf("%-32s %14s %12s   %s\n", "check", "max_error", "tol", "status");
  for (const auto& result : report.results)
    std::printf("%-32s %14.6e %12.3e   %s\n", result.name.c_str(), result.max_error, result.tol,
                result.pass() ? "pass" : "FAIL");
  std::printf("derivative checks: %s\n", report.all_pass() ? "PASS" : "FAIL");
  return report.all_pass() ? kExitOk : kExitDerivFailure;
}

struct BenchArgs {
  std::string model;
  int samples = 200;
};

int cmd_bench(const BenchArgs& args) {
  RobotModel model = load_model(args.model);
  BenchReport report = run_bench(model, args.samples);
  std::printf("dof = %d, samples = %d\n", model.dof(), report.samples);
  std::printf("omega            mean %12.3f us   stddev %12.3f us\n", report.omega.mean_us,
              report.omega.stddev_us);
  std::printf("omega_jacobian   mean %12.3f us   stddev %12.3f us\n", report.jacobian.mean_us,
              report.jacobian.stddev_us);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Homotopy-flow trajectory optimization for rigid-body chains"};
  app.require_subcommand(1);

  SolveArgs solve_args;
  CLI::App* solve = app.add_subcommand("solve", "Evolve a scenario and write the trajectory");
  solve->add_option("--model", solve_args.model, "model file")->required();
  solve->add_option("--scenario", solve_args.scenario, "scenario file")->required();
  solve->add_option("--out", solve_args.out, "output trajectory CSV")->required();
  solve->add_option("--log", solve_args.log, "output convergence CSV")->required();
  solve->add_option("--threads", solve_args.threads, "worker threads (0 = hardware)")
      ->check(CLI::NonNegativeNumber);

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "Roll out a trajectory under feedback");
  verify->add_option("--model", verify_args.model, "model file")->required();
  verify->add_option("--scenario", verify_args.scenario, "scenario file")->required();
  verify->add_option("--traj", verify_args.traj, "trajectory CSV to check")->required();
  verify->add_option("--out", verify_args.out, "output rollout CSV")->required();

  CheckArgs check_args;
  double tol_value = 0.0;
  CLI::App* check = app.add_subcommand("check-derivs", "Finite-difference derivative audit");
  check->add_option("--model", check_args.model, "model file")->required();
  check->add_option("--seed", check_args.seed, "random seed");
  CLI::Option* tol_opt = check->add_option("--tol", tol_value, "override every tolerance");

  BenchArgs bench_args;
  CLI::App* bench = app.add_subcommand("bench", "Time the flow right-hand side and Jacobian");
  bench->add_option("--model", bench_args.model, "model file")->required();
  bench->add_option("--samples", bench_args.samples, "measurement samples")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (solve->parsed()) return cmd_solve(solve_args);
    if (verify->parsed()) return cmd_verify(verify_args);
    if (check->parsed()) {
      if (tol_opt->count() > 0) check_args.tol = tol_value;
      return cmd_check_derivs(check_args);
    }
    if (bench->parsed()) return cmd_bench(bench_args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInputError;
  }
  return kExitInputError;
}

}  // namespace heatflow

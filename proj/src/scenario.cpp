#include "heatflow/scenario.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

#include "heatflow/errors.hpp"

namespace heatflow {

namespace {

std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto begin = s.find_first_not_of(ws);
  if (begin == std::string::npos) return "";
  auto end = s.find_last_not_of(ws);
  return s.substr(begin, end - begin + 1);
}

double parse_double(const std::string& text, int line) {
  const std::string t = trim(text);
  if (t.empty()) throw ParseError(line, "expected a number, got an empty field");
  char* end = nullptr;
  double value = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw ParseError(line, "could not parse number: '" + t + "'");
  return value;
}

int parse_int(const std::string& text, int line) {
  const std::string t = trim(text);
  char* end = nullptr;
  long value = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size())
    throw ParseError(line, "could not parse integer: '" + t + "'");
  return static_cast<int>(value);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  std::string current;
  std::stringstream stream(text);
  while (std::getline(stream, current, ',')) parts.push_back(current);
  if (!text.empty() && text.back() == ',') parts.push_back("");
  return parts;
}

VecX parse_vector(const std::string& text, int line) {
  auto parts = split_commas(text);
  VecX out(parts.size());
  for (size_t i = 0; i < parts.size(); ++i) out(i) = parse_double(parts[i], line);
  return out;
}

std::string format_double(double value) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::string format_vector(const VecX& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v(i));
  }
  return out;
}

}  // namespace

ScenarioFile parse_scenario(const std::string& text) {
  ScenarioFile scenario;
  std::set<std::string> seen;
  bool in_obstacle = false;
  bool obstacle_has_center = false, obstacle_has_radius = false;
  int obstacle_line = 0;

  std::stringstream stream(text);
  std::string raw;
  int line = 0;

  auto close_obstacle = [&]() {
    if (!in_obstacle) return;
    if (!obstacle_has_center || !obstacle_has_radius)
      throw ParseError(obstacle_line, "[obstacle] block needs both center and radius");
    in_obstacle = false;
  };

  while (std::getline(stream, raw)) {
    ++line;
    std::string content = raw.substr(0, raw.find('#'));
    content = trim(content);
    if (content.empty()) continue;

    if (content.front() == '[') {
      if (content != "[obstacle]")
        throw ParseError(line, "unknown section '" + content + "'");
      close_obstacle();
      in_obstacle = true;
      obstacle_has_center = obstacle_has_radius = false;
      obstacle_line = line;
      scenario.spheres.push_back({});
      continue;
    }

    auto eq = content.find('=');
    if (eq == std::string::npos)
      throw ParseError(line, "expected 'key = value', got '" + content + "'");
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key.empty()) throw ParseError(line, "missing key before '='");

    if (in_obstacle) {
      SphereObstacle& sphere = scenario.spheres.back();
      if (key == "center") {
        VecX c = parse_vector(value, line);
        if (c.size() != 3) throw ParseError(line, "obstacle center needs three components");
        sphere.center = c;
        obstacle_has_center = true;
      } else if (key == "radius") {
        sphere.radius = parse_double(value, line);
        if (!(sphere.radius > 0)) throw ParseError(line, "obstacle radius must be positive");
        obstacle_has_radius = true;
      } else {
        throw ParseError(line, "unknown obstacle key '" + key + "'");
      }
      continue;
    }

    if (!seen.insert(key).second) throw ParseError(line, "duplicate key '" + key + "'");

    if (key == "model") {
      scenario.model_path = value;
    } else if (key == "x0") {
      scenario.x0 = parse_vector(value, line);
    } else if (key == "xf") {
      scenario.xf = parse_vector(value, line);
    } else if (key == "T") {
      scenario.T = parse_double(value, line);
    } else if (key == "k") {
      scenario.params.k = parse_double(value, line);
    } else if (key == "s_max") {
      scenario.params.s_max = parse_double(value, line);
    } else if (key == "p") {
      scenario.params.p = parse_int(value, line);
    } else if (key == "k_cons") {
      scenario.params.k_cons = parse_double(value, line);
    } else if (key == "c_cons") {
      scenario.params.c_cons = parse_double(value, line);
    } else if (key == "kp") {
      scenario.kp = parse_double(value, line);
    } else if (key == "kv") {
      scenario.kv = parse_double(value, line);
    } else if (key == "epsilon") {
      scenario.epsilon = parse_double(value, line);
    } else if (key == "check_dt") {
      scenario.check_dt = parse_double(value, line);
    } else if (key == "rollout_dt") {
      scenario.rollout_dt = parse_double(value, line);
    } else if (key == "check_frames") {
      for (const auto& part : split_commas(value)) {
        std::string name = trim(part);
        if (name.empty()) throw ParseError(line, "empty frame name in check_frames");
        scenario.check_frames.push_back(name);
      }
    } else if (key == "method") {
      scenario.flow.method = value;
    } else if (key == "ds_init") {
      scenario.flow.ds_init = parse_double(value, line);
    } else if (key == "ds_min") {
      scenario.flow.ds_min = parse_double(value, line);
    } else if (key == "ds_max") {
      scenario.flow.ds_max = parse_double(value, line);
    } else if (key == "newton_tol") {
      scenario.flow.newton_tol = parse_double(value, line);
    } else if (key == "newton_max_iter") {
      scenario.flow.newton_max_iter = parse_int(value, line);
    } else if (key == "steady_tol") {
      scenario.flow.steady_tol = parse_double(value, line);
    } else if (key == "log_every") {
      scenario.flow.log_every = parse_int(value, line);
    } else {
      throw ParseError(line, "unknown key '" + key + "'");
    }
  }
  close_obstacle();

  for (const char* required : {"x0", "xf", "T", "k", "p", "s_max"})
    if (!seen.count(required))
      throw std::invalid_argument(std::string("scenario is missing required key '") + required +
                                  "'");
  if (!(scenario.T > 0)) throw std::invalid_argument("scenario horizon T must be positive");
  if (scenario.x0.size() != scenario.xf.size())
    throw std::invalid_argument("x0 and xf must have the same length");
  if (scenario.x0.size() == 0 || scenario.x0.size() % 2 != 0)
    throw std::invalid_argument("x0 must hold positions and velocities (even, nonzero length)");
  validate_params(scenario.params);
  if (!(scenario.epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  if (!(scenario.check_dt > 0)) throw std::invalid_argument("check_dt must be positive");
  if (!(scenario.rollout_dt > 0)) throw std::invalid_argument("rollout_dt must be positive");
  return scenario;
}

ScenarioFile load_scenario(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw ParseError(0, "cannot open scenario file: " + path);
  std::stringstream buffer;
  buffer << file.rdbuf();
  return parse_scenario(buffer.str());
}

std::string serialize_scenario(const ScenarioFile& scenario) {
  std::string out;
  if (!scenario.model_path.empty()) out += "model = " + scenario.model_path + "\n";
  out += "x0 = " + format_vector(scenario.x0) + "\n";
  out += "xf = " + format_vector(scenario.xf) + "\n";
  out += "T = " + format_double(scenario.T) + "\n";
  out += "k = " + format_double(scenario.params.k) + "\n";
  out += "s_max = " + format_double(scenario.params.s_max) + "\n";
  out += "p = " + std::to_string(scenario.params.p) + "\n";
  out += "k_cons = " + format_double(scenario.params.k_cons) + "\n";
  out += "c_cons = " + format_double(scenario.params.c_cons) + "\n";
  out += "kp = " + format_double(scenario.kp) + "\n";
  out += "kv = " + format_double(scenario.kv) + "\n";
  out += "epsilon = " + format_double(scenario.epsilon) + "\n";
  out += "check_dt = " + format_double(scenario.check_dt) + "\n";
  out += "rollout_dt = " + format_double(scenario.rollout_dt) + "\n";
  out += "method = " + scenario.flow.method + "\n";
  out += "ds_init = " + format_double(scenario.flow.ds_init) + "\n";
  out += "ds_min = " + format_double(scenario.flow.ds_min) + "\n";
  out += "ds_max = " + format_double(scenario.flow.ds_max) + "\n";
  out += "newton_tol = " + format_double(scenario.flow.newton_tol) + "\n";
  out += "newton_max_iter = " + std::to_string(scenario.flow.newton_max_iter) + "\n";
  out += "steady_tol = " + format_double(scenario.flow.steady_tol) + "\n";
  out += "log_every = " + std::to_string(scenario.flow.log_every) + "\n";
  if (!scenario.check_frames.empty()) {
    out += "check_frames = ";
    for (size_t i = 0; i < scenario.check_frames.size(); ++i) {
      if (i) out += ", ";
      out += scenario.check_frames[i];
    }
    out += "\n";
  }
  for (const auto& sphere : scenario.spheres) {
    out += "\n[obstacle]\n";
    out += "center = " + format_vector(sphere.center) + "\n";
    out += "radius = " + format_double(sphere.radius) + "\n";
  }
  return out;
}

namespace {

std::vector<std::string> csv_header(int n) {
  std::vector<std::string> names;
  names.push_back("t");
  for (const char* prefix : {"q", "v", "u"})
    for (int i = 1; i <= n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

void write_csv_row(std::FILE* file, double t, const VecX& rest) {
  std::fprintf(file, "%.17g", t);
  for (int i = 0; i < rest.size(); ++i) std::fprintf(file, ",%.17g", rest(i));
  std::fprintf(file, "\n");
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_for_write(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "w"));
  if (!file) throw std::runtime_error("cannot open file for writing: " + path);
  return file;
}

}  // namespace

void write_trajectory_csv(const std::string& path, const TrajectorySolution& solution, int n) {
  const int rows = static_cast<int>(solution.node_times.size());
  if (solution.node_states.rows() != rows || solution.node_states.cols() != 2 * n ||
      solution.node_controls.rows() != rows || solution.node_controls.cols() != n)
    throw std::invalid_argument("trajectory dimensions do not match the model");

  FilePtr file = open_for_write(path);
  auto names = csv_header(n);
  for (size_t i = 0; i < names.size(); ++i)
    std::fprintf(file.get(), "%s%s", i ? "," : "", names[i].c_str());
  std::fprintf(file.get(), "\n");

  VecX row(3 * n);
  for (int i = 0; i < rows; ++i) {
    row.head(2 * n) = solution.node_states.row(i);
    row.tail(n) = solution.node_controls.row(i);
    write_csv_row(file.get(), solution.node_times(i), row);
  }
}

TrajectorySolution read_trajectory_csv(const std::string& path, int n) {
  std::ifstream file(path);
  if (!file) throw ParseError(0, "cannot open trajectory file: " + path);

  std::string header;
  if (!std::getline(file, header)) throw ParseError(1, "trajectory file is empty");
  {
    std::string expected;
    for (const auto& name : csv_header(n)) {
      if (!expected.empty()) expected += ",";
      expected += name;
    }
    if (trim(header) != expected)
      throw ParseError(1, "unexpected trajectory header; want '" + expected + "'");
  }

  std::vector<VecX> rows;
  std::string raw;
  int line = 1;
  while (std::getline(file, raw)) {
    ++line;
    std::string content = trim(raw);
    if (content.empty()) continue;
    auto parts = split_commas(content);
    if (static_cast<int>(parts.size()) != 1 + 3 * n)
      throw ParseError(line, "expected " + std::to_string(1 + 3 * n) + " fields, got " +
                                 std::to_string(parts.size()));
    VecX row(1 + 3 * n);
    for (size_t i = 0; i < parts.size(); ++i) row(i) = parse_double(parts[i], line);
    rows.push_back(row);
  }
  if (rows.size() < 2) throw ParseError(line, "trajectory needs at least two rows");

  TrajectorySolution solution;
  const int m = static_cast<int>(rows.size());
  solution.node_times.resize(m);
  solution.node_states.resize(m, 2 * n);
  solution.node_controls.resize(m, n);
  for (int i = 0; i < m; ++i) {
    solution.node_times(i) = rows[i](0);
    solution.node_states.row(i) = rows[i].segment(1, 2 * n);
    solution.node_controls.row(i) = rows[i].tail(n);
  }
  return solution;
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRecord>& records,
                           const std::vector<std::string>& config_comments) {
  FilePtr file = open_for_write(path);
  for (const auto& comment : config_comments)
    std::fprintf(file.get(), "# %s\n", comment.c_str());
  std::fprintf(file.get(), "s,action,control_energy,rhs_inf_norm,accepted\n");
  for (const auto& record : records)
    std::fprintf(file.get(), "%.17g,%.17g,%.17g,%.17g,%d\n", record.s, record.action,
                 record.control_energy, record.rhs_inf_norm, record.step_accepted ? 1 : 0);
}

void write_rollout_csv(const std::string& path, const RolloutResult& result, int n) {
  FilePtr file = open_for_write(path);
  std::fprintf(file.get(), "t");
  for (const char* prefix : {"q", "v", "ufb"})
    for (int i = 1; i <= n; ++i) std::fprintf(file.get(), ",%s%d", prefix, i);
  std::fprintf(file.get(), "\n");
  VecX row(3 * n);
  for (int i = 0; i < result.times.size(); ++i) {
    row.head(2 * n) = result.states.row(i);
    row.tail(n) = result.inputs_fb.row(i);
    write_csv_row(file.get(), result.times(i), row);
  }
}

}  // namespace heatflow

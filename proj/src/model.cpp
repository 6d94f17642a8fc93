#include "heatflow/model.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace heatflow {

namespace {

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

struct TokenLine {
  int number = 0;  // 1-based
  std::vector<std::string> tokens;
};

std::vector<TokenLine> tokenize(const std::string& text) {
  std::vector<TokenLine> lines;
  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ls(raw);
    TokenLine line;
    line.number = number;
    std::string tok;
    while (ls >> tok) line.tokens.push_back(tok);
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

double to_number(const std::string& tok, int line) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    throw ParseError(line, "expected a number, got '" + tok + "'");
  }
  if (pos != tok.size()) throw ParseError(line, "trailing characters in number '" + tok + "'");
  return v;
}

/// Cursor over one line's tokens with consistent error reporting.
class Cursor {
 public:
  Cursor(const TokenLine& line, std::size_t start) : line_(line), at_(start) {}

  bool done() const { return at_ >= line_.tokens.size(); }
  std::string word(const char* what) {
    if (done()) throw ParseError(line_.number, std::string("missing ") + what);
    return line_.tokens[at_++];
  }
  double number(const char* what) { return to_number(word(what), line_.number); }
  Vec3 vec3(const char* what) {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v(i) = number(what);
    return v;
  }
  int line() const { return line_.number; }

 private:
  const TokenLine& line_;
  std::size_t at_;
};

}  // namespace

int RobotModel::frame_index(const std::string& frame_name) const {
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (frames[i].name == frame_name) return static_cast<int>(i);
  return -1;
}

Mat3 rpy_to_matrix(const Vec3& rpy) {
  using Eigen::AngleAxisd;
  return (AngleAxisd(rpy.z(), Vec3::UnitZ()) * AngleAxisd(rpy.y(), Vec3::UnitY()) *
          AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

RobotModel parse_model(const std::string& text) {
  RobotModel model;
  std::map<std::string, int> body_index;
  bool saw_robot = false;

  for (const TokenLine& line : tokenize(text)) {
    Cursor cur(line, 1);
    const std::string& head = line.tokens[0];

    if (head == "robot") {
      model.name = cur.word("robot name");
      saw_robot = true;
    } else if (head == "gravity") {
      model.gravity = cur.vec3("gravity component");
    } else if (head == "body") {
      Body b;
      b.name = cur.word("body name");
      if (body_index.count(b.name))
        throw ModelError("duplicate body name '" + b.name + "'");
      bool have_parent = false, have_joint = false, have_axis = false, have_mass = false;
      Vec3 inert_diag = Vec3::Zero(), inert_off = Vec3::Zero();
      while (!cur.done()) {
        std::string key = cur.word("keyword");
        if (key == "parent") {
          std::string pname = cur.word("parent name");
          if (pname == "world") {
            b.parent = -1;
          } else {
            auto it = body_index.find(pname);
            if (it == body_index.end())
              throw ModelError("body '" + b.name + "' references unknown parent '" + pname +
                               "' (parents must be declared first)");
            b.parent = it->second;
          }
          have_parent = true;
        } else if (key == "joint") {
          std::string kind = cur.word("joint kind");
          if (kind == "revolute") {
            b.joint.kind = JointKind::revolute;
          } else if (kind == "prismatic") {
            b.joint.kind = JointKind::prismatic;
          } else {
            throw ParseError(cur.line(), "unknown joint kind '" + kind + "'");
          }
          have_joint = true;
        } else if (key == "axis") {
          b.joint.axis = cur.vec3("axis component");
          have_axis = true;
        } else if (key == "xyz") {
          b.xyz = cur.vec3("xyz component");
        } else if (key == "rpy") {
          b.rpy = cur.vec3("rpy component");
        } else if (key == "mass") {
          b.inertia.mass = cur.number("mass");
          have_mass = true;
        } else if (key == "com") {
          b.inertia.com = cur.vec3("com component");
        } else if (key == "inertia") {
          inert_diag = cur.vec3("inertia component");  // ixx iyy izz
          inert_off = cur.vec3("inertia component");   // ixy ixz iyz
        } else {
          throw ParseError(cur.line(), "unknown body keyword '" + key + "'");
        }
      }
      if (!have_parent) throw ParseError(line.number, "body without parent");
      if (!have_joint) throw ParseError(line.number, "body without joint");
      if (!have_axis) throw ParseError(line.number, "body without axis");
      if (!have_mass) throw ParseError(line.number, "body without mass");

      if (b.inertia.mass <= 0.0)
        throw ModelError("body '" + b.name + "' must have positive mass");
      double axis_norm = b.joint.axis.norm();
      if (axis_norm < 1e-12)
        throw ModelError("body '" + b.name + "' has a zero joint axis");
      // keep already-unit axes bit-exact so serialization round-trips
      if (std::abs(axis_norm - 1.0) > 1e-12) b.joint.axis /= axis_norm;

      b.inertia.rot_inertia << inert_diag.x(), inert_off.x(), inert_off.y(),
                               inert_off.x(), inert_diag.y(), inert_off.z(),
                               inert_off.y(), inert_off.z(), inert_diag.z();

      // fixed placement: rotate child coordinates into parent via R, so the
      // Pluecker coordinate rotation is R^T
      b.joint.parent_to_joint.rotation = rpy_to_matrix(b.rpy).transpose();
      b.joint.parent_to_joint.translation = b.xyz;

      body_index[b.name] = static_cast<int>(model.bodies.size());
      model.bodies.push_back(std::move(b));
    } else if (head == "frame") {
      FrameDef f;
      f.name = cur.word("frame name");
      std::string kw = cur.word("'body'");
      if (kw != "body") throw ParseError(cur.line(), "expected 'body', got '" + kw + "'");
      std::string bname = cur.word("frame body name");
      auto it = body_index.find(bname);
      if (it == body_index.end())
        throw ModelError("frame '" + f.name + "' references unknown body '" + bname + "'");
      f.body = it->second;
      kw = cur.word("'xyz'");
      if (kw != "xyz") throw ParseError(cur.line(), "expected 'xyz', got '" + kw + "'");
      f.offset = cur.vec3("frame offset");
      model.frames.push_back(std::move(f));
    } else {
      throw ParseError(line.number, "unknown directive '" + head + "'");
    }
  }

  if (!saw_robot) throw ModelError("model text has no 'robot' line");
  if (model.bodies.empty()) throw ModelError("model has no bodies");
  return model;
}

RobotModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::string serialize_model(const RobotModel& model) {
  std::ostringstream out;
  out << "robot " << model.name << "\n";
  out << "gravity " << fmt17(model.gravity.x()) << " " << fmt17(model.gravity.y()) << " "
      << fmt17(model.gravity.z()) << "\n";
  for (const Body& b : model.bodies) {
    const Mat3& I = b.inertia.rot_inertia;
    out << "body " << b.name << " parent "
        << (b.parent < 0 ? std::string("world") : model.bodies[b.parent].name) << " joint "
        << (b.joint.kind == JointKind::revolute ? "revolute" : "prismatic") << " axis "
        << fmt17(b.joint.axis.x()) << " " << fmt17(b.joint.axis.y()) << " "
        << fmt17(b.joint.axis.z()) << " xyz " << fmt17(b.xyz.x()) << " " << fmt17(b.xyz.y())
        << " " << fmt17(b.xyz.z()) << " rpy " << fmt17(b.rpy.x()) << " " << fmt17(b.rpy.y())
        << " " << fmt17(b.rpy.z()) << " mass " << fmt17(b.inertia.mass) << " com "
        << fmt17(b.inertia.com.x()) << " " << fmt17(b.inertia.com.y()) << " "
        << fmt17(b.inertia.com.z()) << " inertia " << fmt17(I(0, 0)) << " " << fmt17(I(1, 1))
        << " " << fmt17(I(2, 2)) << " " << fmt17(I(0, 1)) << " " << fmt17(I(0, 2)) << " "
        << fmt17(I(1, 2)) << "\n";
  }
  for (const FrameDef& f : model.frames) {
    out << "frame " << f.name << " body " << model.bodies[f.body].name << " xyz "
        << fmt17(f.offset.x()) << " " << fmt17(f.offset.y()) << " " << fmt17(f.offset.z())
        << "\n";
  }
  return out.str();
}

namespace {

void check_q(const RobotModel& model, const VecX& q) {
  if (q.size() != model.dof())
    throw std::invalid_argument("configuration has size " + std::to_string(q.size()) +
                                ", model has " + std::to_string(model.dof()) + " dof");
}

}  // namespace

std::vector<FramePose> body_poses(const RobotModel& model, const VecX& q) {
  check_q(model, q);
  std::vector<PlueckerTransform<double>> world_to_body(model.bodies.size());
  std::vector<FramePose> poses(model.bodies.size());
  for (std::size_t i = 0; i < model.bodies.size(); ++i) {
    const Body& b = model.bodies[i];
    auto Xup = joint_xform<double>(b.joint, q(static_cast<int>(i)));
    world_to_body[i] = b.parent < 0 ? Xup : compose(Xup, world_to_body[b.parent]);
    poses[i].position = world_to_body[i].translation;
    poses[i].rotation = world_to_body[i].rotation.transpose();
  }
  return poses;
}

std::vector<FramePose> forward_kinematics(const RobotModel& model, const VecX& q) {
  auto bodies = body_poses(model, q);
  std::vector<FramePose> out(model.frames.size());
  for (std::size_t i = 0; i < model.frames.size(); ++i) {
    const FrameDef& f = model.frames[i];
    out[i].rotation = bodies[f.body].rotation;
    out[i].position = bodies[f.body].position + bodies[f.body].rotation * f.offset;
  }
  return out;
}

MatX frame_jacobian(const RobotModel& model, const VecX& q, int frame) {
  check_q(model, q);
  if (frame < 0 || frame >= static_cast<int>(model.frames.size()))
    throw std::out_of_range("frame index " + std::to_string(frame) + " out of range");

  auto bodies = body_poses(model, q);
  const FrameDef& f = model.frames[frame];
  Vec3 p = bodies[f.body].position + bodies[f.body].rotation * f.offset;

  MatX J = MatX::Zero(3, model.dof());
  for (int j = f.body; j >= 0; j = model.bodies[j].parent) {
    const Joint& joint = model.bodies[j].joint;
    Vec3 axis_w = bodies[j].rotation * joint.axis;
    if (joint.kind == JointKind::revolute) {
      J.col(j) = axis_w.cross(p - bodies[j].position);
    } else {
      J.col(j) = axis_w;
    }
  }
  return J;
}

}  // namespace heatflow

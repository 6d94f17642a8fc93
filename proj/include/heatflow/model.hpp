#pragma once

#include <string>
#include <vector>

#include "heatflow/errors.hpp"
#include "heatflow/spatial.hpp"
#include "heatflow/types.hpp"

namespace heatflow {

enum class JointKind { revolute, prismatic };

struct Joint {
  JointKind kind = JointKind::revolute;
  Vec3 axis = Vec3::UnitZ();                  // unit vector in the child body frame
  PlueckerTransform<double> parent_to_joint =
      PlueckerTransform<double>::Identity();  // fixed child-from-parent offset at q = 0
};

struct Body {
  std::string name;
  int parent = -1;  // index into RobotModel::bodies, -1 means world
  Joint joint;
  SpatialInertia<double> inertia;
  Vec3 xyz = Vec3::Zero();  // placement numbers as written in the file,
  Vec3 rpy = Vec3::Zero();  // kept verbatim so serialization round-trips
};

struct FrameDef {
  std::string name;
  int body = 0;
  Vec3 offset = Vec3::Zero();  // point expressed in the body frame
};

/// Kinematic tree, one degree of freedom per body, parents stored before
/// children. dof() == bodies.size().
struct RobotModel {
  std::string name;
  Vec3 gravity = Vec3(0, 0, -9.81);
  std::vector<Body> bodies;
  std::vector<FrameDef> frames;

  int dof() const { return static_cast<int>(bodies.size()); }
  int frame_index(const std::string& frame_name) const;
};

struct FramePose {
  Vec3 position;  // world coordinates
  Mat3 rotation;  // body-to-world
};

/// Parse the line-oriented model text. Throws ParseError (with the 1-based
/// line number) on malformed lines and ModelError on structural problems.
RobotModel parse_model(const std::string& text);
RobotModel load_model(const std::string& path);

/// Emit model text that reparses to a numerically identical model
/// (all values printed with 17 significant digits).
std::string serialize_model(const RobotModel& model);

/// World pose of every declared frame at configuration q.
std::vector<FramePose> forward_kinematics(const RobotModel& model, const VecX& q);

/// World pose of every body frame, indexed like RobotModel::bodies.
std::vector<FramePose> body_poses(const RobotModel& model, const VecX& q);

/// 3 x dof positional Jacobian of one declared frame at q.
MatX frame_jacobian(const RobotModel& model, const VecX& q, int frame);

/// Motion subspace of body i's joint, expressed in the child body frame.
inline Motion6<double> joint_subspace(const Joint& j) {
  if (j.kind == JointKind::revolute) return {j.axis, Vec3::Zero()};
  return {Vec3::Zero(), j.axis};
}

/// Child-from-parent transform of a joint at displacement qi. Templated so the
/// dynamics recursions can run on dual scalars.
template <typename S>
PlueckerTransform<S> joint_xform(const Joint& j, const S& qi) {
  using std::cos;
  using std::sin;
  PlueckerTransform<S> Xj;
  if (j.kind == JointKind::revolute) {
    // coordinate transform = transpose of rotating the frame by +q about axis
    Mat3T<S> K = skew<S>(Vec3T<S>(j.axis.cast<S>()));
    Xj.rotation = Mat3T<S>::Identity() - sin(qi) * K + (S(1.0) - cos(qi)) * (K * K);
    Xj.translation = Vec3T<S>::Zero();
  } else {
    Xj.rotation = Mat3T<S>::Identity();
    Xj.translation = qi * j.axis.cast<S>();
  }
  PlueckerTransform<S> Xt{j.parent_to_joint.rotation.cast<S>(),
                          j.parent_to_joint.translation.cast<S>()};
  return compose(Xj, Xt);
}

/// Rotation matrix of fixed-axis roll-pitch-yaw (applied about world X, then
/// Y, then Z), mapping child coordinates to parent coordinates.
Mat3 rpy_to_matrix(const Vec3& rpy);

}  // namespace heatflow

#pragma once

#include <Eigen/Dense>

#include "heatflow/types.hpp"

// Spatial (6-D) vector algebra in the angular-above-linear convention.
//
// A PlueckerTransform X = (E, r) maps coordinates from frame A to frame B,
// where B's origin sits at r (expressed in A) and E rotates A-axis
// coordinates into B-axis coordinates; as a dense 6x6 motion matrix,
// X = [[E, 0], [-E*skew(r), E]]. Transforms are kept factored -- the dense
// matrix never appears on the hot path.

namespace heatflow {

template <typename S>
Mat3T<S> skew(const Vec3T<S>& v) {
  Mat3T<S> m;
  m << S(0.0), -v.z(), v.y(),
       v.z(), S(0.0), -v.x(),
       -v.y(), v.x(), S(0.0);
  return m;
}

template <typename S>
struct Motion6 {
  Vec3T<S> angular;
  Vec3T<S> linear;

  static Motion6 Zero() { return {Vec3T<S>::Zero(), Vec3T<S>::Zero()}; }

  Motion6 operator+(const Motion6& o) const { return {angular + o.angular, linear + o.linear}; }
  Motion6 operator-(const Motion6& o) const { return {angular - o.angular, linear - o.linear}; }
  Motion6 operator*(const S& a) const { return {angular * a, linear * a}; }
};

template <typename S>
struct Force6 {
  Vec3T<S> couple;
  Vec3T<S> linear;

  static Force6 Zero() { return {Vec3T<S>::Zero(), Vec3T<S>::Zero()}; }

  Force6 operator+(const Force6& o) const { return {couple + o.couple, linear + o.linear}; }
  Force6 operator-(const Force6& o) const { return {couple - o.couple, linear - o.linear}; }
};

template <typename S>
struct PlueckerTransform {
  Mat3T<S> rotation;     // E: A-axis coordinates -> B-axis coordinates
  Vec3T<S> translation;  // r: origin of B expressed in A

  static PlueckerTransform Identity() { return {Mat3T<S>::Identity(), Vec3T<S>::Zero()}; }
};

/// Rigid-body inertia referenced to the body frame origin.
template <typename S>
struct SpatialInertia {
  S mass{};
  Vec3T<S> com = Vec3T<S>::Zero();        // center of mass, body frame
  Mat3T<S> rot_inertia = Mat3T<S>::Zero();  // 3x3 symmetric, about the body origin

  static SpatialInertia Zero() { return {S(0.0), Vec3T<S>::Zero(), Mat3T<S>::Zero()}; }
};

// ---------------------------------------------------------------------------
// transforms

template <typename S>
Motion6<S> xform_motion(const PlueckerTransform<S>& X, const Motion6<S>& m) {
  return {X.rotation * m.angular,
          X.rotation * (m.linear - X.translation.cross(m.angular))};
}

/// Apply X^{-1} to a motion vector (B coordinates back to A).
template <typename S>
Motion6<S> inv_xform_motion(const PlueckerTransform<S>& X, const Motion6<S>& m) {
  Vec3T<S> w = X.rotation.transpose() * m.angular;
  return {w, X.rotation.transpose() * m.linear + X.translation.cross(w)};
}

/// Force covector transform X^{-T} (the dual of xform_motion).
template <typename S>
Force6<S> xform_force(const PlueckerTransform<S>& X, const Force6<S>& f) {
  return {X.rotation * (f.couple - X.translation.cross(f.linear)),
          X.rotation * f.linear};
}

/// Apply X^T to a force: maps a force expressed in B back to A coordinates.
/// This is the adjoint used when accumulating child forces into a parent.
template <typename S>
Force6<S> inv_xform_force(const PlueckerTransform<S>& X, const Force6<S>& f) {
  Vec3T<S> fl = X.rotation.transpose() * f.linear;
  return {X.rotation.transpose() * f.couple + X.translation.cross(fl), fl};
}

/// compose(X1, X2) applies X2 first: dense equivalent X1 * X2.
template <typename S>
PlueckerTransform<S> compose(const PlueckerTransform<S>& X1, const PlueckerTransform<S>& X2) {
  return {X1.rotation * X2.rotation,
          X2.translation + X2.rotation.transpose() * X1.translation};
}

template <typename S>
PlueckerTransform<S> inverse(const PlueckerTransform<S>& X) {
  return {X.rotation.transpose(), -(X.rotation * X.translation)};
}

// ---------------------------------------------------------------------------
// cross products and inertia

/// Motion-by-motion cross product [v x] m.
template <typename S>
Motion6<S> spatial_cross(const Motion6<S>& v, const Motion6<S>& m) {
  return {v.angular.cross(m.angular),
          v.angular.cross(m.linear) + v.linear.cross(m.angular)};
}

/// Dual cross product [v x*] f acting on a force.
template <typename S>
Force6<S> spatial_cross(const Motion6<S>& v, const Force6<S>& f) {
  return {v.angular.cross(f.couple) + v.linear.cross(f.linear),
          v.angular.cross(f.linear)};
}

/// f = I m without forming the 6x6 matrix.
template <typename S>
Force6<S> inertia_apply(const SpatialInertia<S>& I, const Motion6<S>& m) {
  return {I.rot_inertia * m.angular + I.mass * I.com.cross(m.linear),
          I.mass * (m.linear - I.com.cross(m.angular))};
}

/// Sum of two inertias expressed in the same frame.
template <typename S>
SpatialInertia<S> inertia_sum(const SpatialInertia<S>& a, const SpatialInertia<S>& b) {
  SpatialInertia<S> r;
  r.mass = a.mass + b.mass;
  r.com = r.mass > S(0.0) ? Vec3T<S>((a.mass * a.com + b.mass * b.com) / r.mass)
                          : Vec3T<S>::Zero();
  r.rot_inertia = a.rot_inertia + b.rot_inertia;
  return r;
}

/// Re-express a child-frame inertia in the parent frame, X = (E, r) being the
/// child-from-parent transform. Rotate the about-origin inertia down to the
/// COM, move axes, then shift back out to the parent origin.
template <typename S>
SpatialInertia<S> xform_inertia_to_parent(const PlueckerTransform<S>& X,
                                          const SpatialInertia<S>& I) {
  SpatialInertia<S> r;
  r.mass = I.mass;
  r.com = X.translation + X.rotation.transpose() * I.com;
  Mat3T<S> c_child = skew<S>(I.com);
  Mat3T<S> about_com =
      I.rot_inertia + I.mass * (c_child * c_child);  // I_com = I_origin + m*skew(c)^2
  Mat3T<S> rotated = X.rotation.transpose() * about_com * X.rotation;
  Mat3T<S> c_par = skew<S>(r.com);
  r.rot_inertia = rotated - r.mass * (c_par * c_par);
  return r;
}

// ---------------------------------------------------------------------------
// dense views (used by the articulated-body pass; tests build their own)

template <typename S>
Eigen::Matrix<S, 6, 6> to_matrix6(const PlueckerTransform<S>& X) {
  Eigen::Matrix<S, 6, 6> m;
  m.template topLeftCorner<3, 3>() = X.rotation;
  m.template topRightCorner<3, 3>().setZero();
  m.template bottomLeftCorner<3, 3>() = -X.rotation * skew<S>(X.translation);
  m.template bottomRightCorner<3, 3>() = X.rotation;
  return m;
}

template <typename S>
Eigen::Matrix<S, 6, 6> to_matrix6(const SpatialInertia<S>& I) {
  Eigen::Matrix<S, 6, 6> m;
  Mat3T<S> mc = I.mass * skew<S>(I.com);
  m.template topLeftCorner<3, 3>() = I.rot_inertia;
  m.template topRightCorner<3, 3>() = mc;
  m.template bottomLeftCorner<3, 3>() = mc.transpose();
  m.template bottomRightCorner<3, 3>() = I.mass * Mat3T<S>::Identity();
  return m;
}

template <typename S>
Eigen::Matrix<S, 6, 1> to_vector6(const Motion6<S>& m) {
  Eigen::Matrix<S, 6, 1> v;
  v << m.angular, m.linear;
  return v;
}

template <typename S>
Eigen::Matrix<S, 6, 1> to_vector6(const Force6<S>& f) {
  Eigen::Matrix<S, 6, 1> v;
  v << f.couple, f.linear;
  return v;
}

template <typename S>
Motion6<S> motion_from_vector6(const Eigen::Matrix<S, 6, 1>& v) {
  return {v.template head<3>(), v.template tail<3>()};
}

template <typename S>
Force6<S> force_from_vector6(const Eigen::Matrix<S, 6, 1>& v) {
  return {v.template head<3>(), v.template tail<3>()};
}

/// Power pairing <f, m>.
template <typename S>
S dot(const Force6<S>& f, const Motion6<S>& m) {
  return f.couple.dot(m.angular) + f.linear.dot(m.linear);
}

}  // namespace heatflow

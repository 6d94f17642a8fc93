#include "heatflow/rbd.hpp"

#include <Eigen/Cholesky>

#include "heatflow/dual.hpp"
#include "heatflow/errors.hpp"

// Recursive Newton-Euler, composite-rigid-body and articulated-body passes,
// written once over a generic scalar. Every derivative below -- first and
// second order -- comes from running these same recursions on (nested) dual
// numbers seeded along input directions, so the partials are exact rather
// than differenced. One dual pass costs a small constant times the double
// pass; 2n first-order seeds reproduce the familiar O(n^2) derivative cost.

namespace heatflow {

namespace {

template <typename S>
SpatialInertia<S> cast_inertia(const SpatialInertia<double>& I) {
  return {S(I.mass), I.com.cast<S>(), I.rot_inertia.cast<S>()};
}

template <typename S>
struct KinPass {
  std::vector<PlueckerTransform<S>> Xup;  // child-from-parent at the current q
  std::vector<Motion6<S>> S_;             // joint subspaces, child coordinates
};

template <typename S>
KinPass<S> kin_pass(const RobotModel& model, const VecXT<S>& q) {
  const int n = model.dof();
  KinPass<S> k;
  k.Xup.resize(n);
  k.S_.resize(n);
  for (int i = 0; i < n; ++i) {
    const Joint& j = model.bodies[i].joint;
    k.Xup[i] = joint_xform<S>(j, q(i));
    if (j.kind == JointKind::revolute) {
      k.S_[i] = {j.axis.cast<S>(), Vec3T<S>::Zero()};
    } else {
      k.S_[i] = {Vec3T<S>::Zero(), j.axis.cast<S>()};
    }
  }
  return k;
}

template <typename S>
VecXT<S> rnea_T(const RobotModel& model, const VecXT<S>& q, const VecXT<S>& v,
                const VecXT<S>& a, bool use_gravity) {
  const int n = model.dof();
  KinPass<S> k = kin_pass<S>(model, q);
  std::vector<Motion6<S>> vel(n), acc(n);
  std::vector<Force6<S>> f(n);

  // gravity enters as a fictitious upward base acceleration
  Motion6<S> a0 = Motion6<S>::Zero();
  if (use_gravity) a0.linear = (-model.gravity).cast<S>();

  for (int i = 0; i < n; ++i) {
    const int par = model.bodies[i].parent;
    Motion6<S> vj = k.S_[i] * v(i);
    vel[i] = par < 0 ? vj : xform_motion(k.Xup[i], vel[par]) + vj;
    acc[i] = xform_motion(k.Xup[i], par < 0 ? a0 : acc[par]) + k.S_[i] * a(i) +
             spatial_cross(vel[i], vj);
    SpatialInertia<S> I = cast_inertia<S>(model.bodies[i].inertia);
    f[i] = inertia_apply(I, acc[i]) + spatial_cross(vel[i], inertia_apply(I, vel[i]));
  }

  VecXT<S> tau(n);
  for (int i = n - 1; i >= 0; --i) {
    tau(i) = dot(f[i], k.S_[i]);
    const int par = model.bodies[i].parent;
    if (par >= 0) f[par] = f[par] + inv_xform_force(k.Xup[i], f[i]);
  }
  return tau;
}

template <typename S>
MatXT<S> crba_T(const RobotModel& model, const VecXT<S>& q) {
  const int n = model.dof();
  KinPass<S> k = kin_pass<S>(model, q);
  std::vector<SpatialInertia<S>> Ic(n);
  for (int i = 0; i < n; ++i) Ic[i] = cast_inertia<S>(model.bodies[i].inertia);

  MatXT<S> H = MatXT<S>::Zero(n, n);
  for (int i = n - 1; i >= 0; --i) {
    const int par = model.bodies[i].parent;
    if (par >= 0) Ic[par] = inertia_sum(Ic[par], xform_inertia_to_parent(k.Xup[i], Ic[i]));
    Force6<S> fh = inertia_apply(Ic[i], k.S_[i]);
    H(i, i) = dot(fh, k.S_[i]);
    int j = i;
    while (model.bodies[j].parent >= 0) {
      fh = inv_xform_force(k.Xup[j], fh);
      j = model.bodies[j].parent;
      S hij = dot(fh, k.S_[j]);
      H(i, j) = hij;
      H(j, i) = hij;
    }
  }
  return H;
}

template <typename S>
VecXT<S> aba_T(const RobotModel& model, const VecXT<S>& q, const VecXT<S>& v,
               const VecXT<S>& tau, bool use_gravity) {
  using Mat6S = Eigen::Matrix<S, 6, 6>;
  using Vec6S = Eigen::Matrix<S, 6, 1>;
  const int n = model.dof();
  KinPass<S> k = kin_pass<S>(model, q);

  std::vector<Motion6<S>> vel(n), cbias(n);
  std::vector<Mat6S> IA(n);
  std::vector<Vec6S> pA(n), U(n);
  std::vector<S> d(n), u(n);

  for (int i = 0; i < n; ++i) {
    const int par = model.bodies[i].parent;
    Motion6<S> vj = k.S_[i] * v(i);
    vel[i] = par < 0 ? vj : xform_motion(k.Xup[i], vel[par]) + vj;
    cbias[i] = spatial_cross(vel[i], vj);
    SpatialInertia<S> I = cast_inertia<S>(model.bodies[i].inertia);
    IA[i] = to_matrix6(I);
    pA[i] = to_vector6(spatial_cross(vel[i], inertia_apply(I, vel[i])));
  }

  for (int i = n - 1; i >= 0; --i) {
    Vec6S S6 = to_vector6(k.S_[i]);
    U[i] = IA[i] * S6;
    d[i] = S6.dot(U[i]);
    u[i] = tau(i) - S6.dot(pA[i]);
    const int par = model.bodies[i].parent;
    if (par >= 0) {
      Mat6S Ia = IA[i] - U[i] * (U[i] / d[i]).transpose();
      Vec6S pa = pA[i] + Ia * to_vector6(cbias[i]) + U[i] * (u[i] / d[i]);
      Mat6S X6 = to_matrix6(k.Xup[i]);
      IA[par] += X6.transpose() * Ia * X6;
      pA[par] += X6.transpose() * pa;
    }
  }

  Motion6<S> a0 = Motion6<S>::Zero();
  if (use_gravity) a0.linear = (-model.gravity).cast<S>();
  std::vector<Motion6<S>> acc(n);
  VecXT<S> qdd(n);
  for (int i = 0; i < n; ++i) {
    const int par = model.bodies[i].parent;
    Motion6<S> ax = xform_motion(k.Xup[i], par < 0 ? a0 : acc[par]) + cbias[i];
    qdd(i) = (u[i] - U[i].dot(to_vector6(ax))) / d[i];
    acc[i] = ax + k.S_[i] * qdd(i);
  }
  return qdd;
}

// ---------------------------------------------------------------------------
// seeding helpers

void check_sizes(const RobotModel& model, const VecX& q, const char* what) {
  if (q.size() != model.dof())
    throw std::invalid_argument(std::string(what) + " has size " + std::to_string(q.size()) +
                                ", model has " + std::to_string(model.dof()) + " dof");
}

VecXT<Dual1> lift1(const VecX& x) {
  VecXT<Dual1> out(x.size());
  for (int i = 0; i < x.size(); ++i) out(i) = Dual1(x(i));
  return out;
}

VecXT<Dual1> lift1_seeded(const VecX& x, int dir) {
  VecXT<Dual1> out = lift1(x);
  out(dir).dot = 1.0;
  return out;
}

VecXT<Dual2> lift2(const VecX& x) {
  VecXT<Dual2> out(x.size());
  for (int i = 0; i < x.size(); ++i) out(i) = Dual2(x(i));
  return out;
}

/// Seed inner direction = e_i, outer direction = e_j (same vector).
VecXT<Dual2> lift2_seeded(const VecX& x, int inner, int outer) {
  VecXT<Dual2> out = lift2(x);
  out(inner).val.dot = 1.0;
  out(outer).dot.val = 1.0;
  return out;
}

VecX dots(const VecXT<Dual1>& x) {
  VecX r(x.size());
  for (int i = 0; i < x.size(); ++i) r(i) = x(i).dot;
  return r;
}

VecX tensor_col(const Tensor3& t, int i, int j) {
  VecX r(t.dim0());
  for (int b = 0; b < t.dim0(); ++b) r(b) = t(b, i, j);
  return r;
}

void set_tensor_col(Tensor3& t, int i, int j, const VecX& x) {
  for (int b = 0; b < t.dim0(); ++b) t(b, i, j) = x(b);
}

}  // namespace

// ---------------------------------------------------------------------------
// public entry points

void DynamicsWorkspace::resize(int dof) {
  n = dof;
  H.setZero(n, n);
  Hinv.setZero(n, n);
  Hdot.setZero(n, n);
  C.setZero(n);
  Cdot.setZero(n);
  FD0.setZero(n);
  dC_dq.setZero(n, n);
  dC_dv.setZero(n, n);
  dFD_dq.setZero(n, n);
  dFD_dv.setZero(n, n);
  dH_dq = Tensor3(n, n, n);
  dHdot_dq = Tensor3(n, n, n);
  d2H_dq2 = Tensor4(n, n, n, n);
  d2ID_dq2 = Tensor3(n, n, n);
  d2ID_dqdv = Tensor3(n, n, n);
  d2ID_dv2 = Tensor3(n, n, n);
  d2FD_dq2 = Tensor3(n, n, n);
  d2FD_dqdv = Tensor3(n, n, n);
  d2FD_dv2 = Tensor3(n, n, n);
  dCdot_dq.setZero(n, n);
  dCdot_dv.setZero(n, n);
}

VecX rnea(const RobotModel& model, const VecX& q, const VecX& v, const VecX& a,
          bool use_gravity) {
  check_sizes(model, q, "q");
  check_sizes(model, v, "v");
  check_sizes(model, a, "a");
  return rnea_T<double>(model, q, v, a, use_gravity);
}

MatX crba(const RobotModel& model, const VecX& q) {
  check_sizes(model, q, "q");
  return crba_T<double>(model, q);
}

VecX aba(const RobotModel& model, const VecX& q, const VecX& v, const VecX& tau,
         bool use_gravity) {
  check_sizes(model, q, "q");
  check_sizes(model, v, "v");
  check_sizes(model, tau, "tau");
  return aba_T<double>(model, q, v, tau, use_gravity);
}

void rnea_d(const RobotModel& model, const VecX& q, const VecX& v, const VecX& a,
            MatX& dtau_dq, MatX& dtau_dv, bool use_gravity) {
  check_sizes(model, q, "q");
  const int n = model.dof();
  dtau_dq.resize(n, n);
  dtau_dv.resize(n, n);
  VecXT<Dual1> vl = lift1(v), al = lift1(a), ql = lift1(q);
  for (int j = 0; j < n; ++j)
    dtau_dq.col(j) = dots(rnea_T<Dual1>(model, lift1_seeded(q, j), vl, al, use_gravity));
  for (int j = 0; j < n; ++j)
    dtau_dv.col(j) = dots(rnea_T<Dual1>(model, ql, lift1_seeded(v, j), al, use_gravity));
}

MatX mass_matrix_dq_action(const RobotModel& model, const VecX& q, const VecX& w) {
  check_sizes(model, q, "q");
  check_sizes(model, w, "w");
  const int n = model.dof();
  // with v = 0 and gravity off, inverse dynamics is exactly H(q) w
  VecXT<Dual1> zero = lift1(VecX::Zero(n)), wl = lift1(w);
  MatX m(n, n);
  for (int j = 0; j < n; ++j)
    m.col(j) = dots(rnea_T<Dual1>(model, lift1_seeded(q, j), zero, wl, false));
  return m;
}

void crba_d(const RobotModel& model, const VecX& q, const VecX& qdot, MatX& H, MatX& Hdot) {
  check_sizes(model, q, "q");
  check_sizes(model, qdot, "qdot");
  const int n = model.dof();
  VecXT<Dual1> ql(n);
  for (int i = 0; i < n; ++i) ql(i) = seed1(q(i), qdot(i));  // one pass along qdot
  MatXT<Dual1> Hd = crba_T<Dual1>(model, ql);
  H.resize(n, n);
  Hdot.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      H(i, j) = Hd(i, j).val;
      Hdot(i, j) = Hd(i, j).dot;
    }
}

void crba_2d(const RobotModel& model, const VecX& q, const VecX& qdot, MatX& H, MatX& Hdot,
             Tensor3& dH_dq, Tensor4& d2H_dq2) {
  check_sizes(model, q, "q");
  check_sizes(model, qdot, "qdot");
  const int n = model.dof();
  H.resize(n, n);
  dH_dq = Tensor3(n, n, n);
  d2H_dq2 = Tensor4(n, n, n, n);

  // upper-triangle direction pairs; the diagonal pass also carries dH/dq_i
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      MatXT<Dual2> Hd = crba_T<Dual2>(model, lift2_seeded(q, i, j));
      if (i == 0 && j == 0)
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) H(a, b) = Hd(a, b).val.val;
      if (i == j) {
        auto sl = dH_dq.slice_last(i);
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) sl(a, b) = Hd(a, b).val.dot;
      }
      auto s2 = d2H_dq2.slice(i, j);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) s2(a, b) = Hd(a, b).dot.dot;
      if (i != j) d2H_dq2.slice(j, i) = MatX(s2);
    }
  Hdot = dH_dq.contract_last(qdot);
}

void aba_d(const RobotModel& model, const VecX& q, const VecX& v, const VecX& tau, VecX& FD,
           MatX& dFD_dq, MatX& dFD_dv, MatX& Hinv) {
  check_sizes(model, q, "q");
  check_sizes(model, v, "v");
  check_sizes(model, tau, "tau");
  const int n = model.dof();
  FD = aba_T<double>(model, q, v, tau, true);
  dFD_dq.resize(n, n);
  dFD_dv.resize(n, n);
  VecXT<Dual1> ql = lift1(q), vl = lift1(v), tl = lift1(tau);
  for (int j = 0; j < n; ++j)
    dFD_dq.col(j) = dots(aba_T<Dual1>(model, lift1_seeded(q, j), vl, tl, true));
  for (int j = 0; j < n; ++j)
    dFD_dv.col(j) = dots(aba_T<Dual1>(model, ql, lift1_seeded(v, j), tl, true));

  MatX H = crba_T<double>(model, q);
  Eigen::LLT<MatX> llt(H);
  if (llt.info() != Eigen::Success)
    throw SingularMass("mass matrix is not positive definite at the queried configuration");
  Hinv = llt.solve(MatX::Identity(n, n));
}

void rnea_2d(const RobotModel& model, const VecX& q, const VecX& v, const VecX& a,
             Tensor3& d2_dq2, Tensor3& d2_dqdv, Tensor3& d2_dv2, bool use_gravity) {
  check_sizes(model, q, "q");
  const int n = model.dof();
  d2_dq2 = Tensor3(n, n, n);
  d2_dqdv = Tensor3(n, n, n);
  d2_dv2 = Tensor3(n, n, n);
  VecXT<Dual2> ql = lift2(q), vl = lift2(v), al = lift2(a);

  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      VecXT<Dual2> tau = rnea_T<Dual2>(model, lift2_seeded(q, i, j), vl, al, use_gravity);
      for (int b = 0; b < n; ++b) {
        d2_dq2(b, i, j) = tau(b).dot.dot;
        d2_dq2(b, j, i) = tau(b).dot.dot;
      }
    }
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      VecXT<Dual2> tau = rnea_T<Dual2>(model, ql, lift2_seeded(v, i, j), al, use_gravity);
      for (int b = 0; b < n; ++b) {
        d2_dv2(b, i, j) = tau(b).dot.dot;
        d2_dv2(b, j, i) = tau(b).dot.dot;
      }
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      VecXT<Dual2> qs = lift2(q), vs = lift2(v);
      qs(i).val.dot = 1.0;  // inner: q_i
      vs(j).dot.val = 1.0;  // outer: v_j
      VecXT<Dual2> tau = rnea_T<Dual2>(model, qs, vs, al, use_gravity);
      for (int b = 0; b < n; ++b) d2_dqdv(b, i, j) = tau(b).dot.dot;
    }
}

void aba_2d(DynamicsWorkspace& ws) {
  const int n = ws.n;
  // Differentiate H(q) FD(q, v) + C(q, v) == 0 twice. The bias tensors in the
  // workspace sit at a = 0; linearity of inverse dynamics in a shifts them to
  // a = FD0 through the d2H contraction below.
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      VecX rhs = tensor_col(ws.d2ID_dq2, i, j);
      rhs += ws.d2H_dq2.slice(i, j) * ws.FD0;
      rhs += ws.dH_dq.slice_last(i) * ws.dFD_dq.col(j);
      rhs += ws.dH_dq.slice_last(j) * ws.dFD_dq.col(i);
      VecX out = -(ws.Hinv * rhs);
      set_tensor_col(ws.d2FD_dq2, i, j, out);
      set_tensor_col(ws.d2FD_dq2, j, i, out);
    }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      VecX rhs = tensor_col(ws.d2ID_dqdv, i, j);
      rhs += ws.dH_dq.slice_last(i) * ws.dFD_dv.col(j);
      set_tensor_col(ws.d2FD_dqdv, i, j, -(ws.Hinv * rhs));
    }
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      VecX out = -(ws.Hinv * tensor_col(ws.d2ID_dv2, i, j));
      set_tensor_col(ws.d2FD_dv2, i, j, out);
      set_tensor_col(ws.d2FD_dv2, j, i, out);
    }
}

Tensor3 get_hdot_d(const VecX& qdot, const Tensor4& d2H_dq2) {
  const int n = static_cast<int>(qdot.size());
  Tensor3 out(n, n, n);
  for (int j = 0; j < n; ++j) {
    MatX m = MatX::Zero(n, n);
    for (int i = 0; i < n; ++i) m += d2H_dq2.slice(i, j) * qdot(i);
    out.slice_last(j) = m;
  }
  return out;
}

void get_cdot_d(const VecX& vq, const VecX& vv, const Tensor3& d2ID_dq2,
                const Tensor3& d2ID_dqdv, const Tensor3& d2ID_dv2, MatX& dCdot_dq,
                MatX& dCdot_dv) {
  const int n = static_cast<int>(vq.size());
  dCdot_dq.resize(n, n);
  dCdot_dv.resize(n, n);
  for (int j = 0; j < n; ++j) {
    dCdot_dq.col(j) = d2ID_dq2.slice_last(j) * vq;
    dCdot_dv.col(j) = d2ID_dqdv.slice_last(j) * vq + d2ID_dv2.slice_last(j) * vv;
  }
  // the d2C/dv dq block, via the index-permuted mixed tensor
  dCdot_dq += d2ID_dqdv.contract_last(vv);
}

void fill_workspace(const RobotModel& model, const VecX& q, const VecX& v, const VecX& vq,
                    const VecX& vv, DynamicsWorkspace& ws) {
  const int n = model.dof();
  if (ws.n != n) ws.resize(n);

  crba_2d(model, q, vq, ws.H, ws.Hdot, ws.dH_dq, ws.d2H_dq2);

  Eigen::LLT<MatX> llt(ws.H);
  if (llt.info() != Eigen::Success)
    throw SingularMass("mass matrix is not positive definite at the queried configuration");
  ws.Hinv = llt.solve(MatX::Identity(n, n));

  ws.C = rnea_T<double>(model, q, v, VecX::Zero(n), true);
  rnea_d(model, q, v, VecX::Zero(n), ws.dC_dq, ws.dC_dv, true);
  ws.Cdot = ws.dC_dq * vq + ws.dC_dv * vv;
  ws.FD0 = -llt.solve(ws.C);

  VecX fd_check;
  aba_d(model, q, v, VecX::Zero(n), fd_check, ws.dFD_dq, ws.dFD_dv, ws.Hinv);

  rnea_2d(model, q, v, VecX::Zero(n), ws.d2ID_dq2, ws.d2ID_dqdv, ws.d2ID_dv2, true);
  ws.dHdot_dq = get_hdot_d(vq, ws.d2H_dq2);
  get_cdot_d(vq, vv, ws.d2ID_dq2, ws.d2ID_dqdv, ws.d2ID_dv2, ws.dCdot_dq, ws.dCdot_dv);
  aba_2d(ws);
}

}  // namespace heatflow

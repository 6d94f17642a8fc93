#pragma once

#include "heatflow/model.hpp"
#include "heatflow/types.hpp"

namespace heatflow {

/// All dynamics quantities needed at one trajectory point, preallocated once
/// per solver thread. Tensor layout is (row, col, diff-variable); second
/// partials of vector maps are (output, first-diff, second-diff).
struct DynamicsWorkspace {
  int n = 0;

  MatX H;      // joint-space mass matrix
  MatX Hinv;
  MatX Hdot;   // time derivative along the supplied direction
  VecX C;      // Coriolis / centrifugal / gravity bias at (q, v)
  VecX Cdot;
  VecX FD0;    // drift forward dynamics -Hinv * C

  MatX dC_dq, dC_dv;
  MatX dFD_dq, dFD_dv;

  Tensor3 dH_dq;     // slice_last(i) = dH/dq_i
  Tensor3 dHdot_dq;  // slice_last(i) = dHdot/dq_i
  Tensor4 d2H_dq2;   // slice(i, j) = d2H/dq_i dq_j

  // second partials of inverse dynamics at (q, v, a = 0), i.e. of the bias C
  Tensor3 d2ID_dq2, d2ID_dqdv, d2ID_dv2;
  // second partials of the drift forward dynamics
  Tensor3 d2FD_dq2, d2FD_dqdv, d2FD_dv2;

  MatX dCdot_dq, dCdot_dv;

  DynamicsWorkspace() = default;
  explicit DynamicsWorkspace(int dof) { resize(dof); }
  void resize(int dof);
};

/// Inverse dynamics: joint torques realizing acceleration a at state (q, v).
VecX rnea(const RobotModel& model, const VecX& q, const VecX& v, const VecX& a,
          bool use_gravity = true);

/// Composite-rigid-body mass matrix (symmetric positive definite).
MatX crba(const RobotModel& model, const VecX& q);

/// Articulated-body forward dynamics: accelerations under torques tau.
VecX aba(const RobotModel& model, const VecX& q, const VecX& v, const VecX& tau,
         bool use_gravity = true);

/// Exact partials of rnea output w.r.t. q and v (a held fixed).
void rnea_d(const RobotModel& model, const VecX& q, const VecX& v, const VecX& a,
            MatX& dtau_dq, MatX& dtau_dv, bool use_gravity = true);

/// Column i = (dH/dq_i) * w, assembled without forming the dH/dq tensor:
/// a gravity-free rnea_d at (q, v = 0, a = w), where inverse dynamics
/// reduces to H(q) w.
MatX mass_matrix_dq_action(const RobotModel& model, const VecX& q, const VecX& w);

/// Mass matrix plus its time derivative along qdot.
void crba_d(const RobotModel& model, const VecX& q, const VecX& qdot, MatX& H, MatX& Hdot);

/// First and second configuration partials of the mass matrix.
void crba_2d(const RobotModel& model, const VecX& q, const VecX& qdot, MatX& H, MatX& Hdot,
             Tensor3& dH_dq, Tensor4& d2H_dq2);

/// Forward dynamics with exact partials and the explicit mass-matrix inverse.
void aba_d(const RobotModel& model, const VecX& q, const VecX& v, const VecX& tau,
           VecX& FD, MatX& dFD_dq, MatX& dFD_dv, MatX& Hinv);

/// Second partials of inverse dynamics (a held fixed).
void rnea_2d(const RobotModel& model, const VecX& q, const VecX& v, const VecX& a,
             Tensor3& d2_dq2, Tensor3& d2_dqdv, Tensor3& d2_dv2, bool use_gravity = true);

/// Second partials of the drift forward dynamics -Hinv(q) C(q, v), obtained by
/// differentiating the identity ID(q, v, FD(q, v, 0)) == 0 twice. Consumes the
/// already-filled H/Hinv/dH_dq/d2H_dq2/dFD_* and bias second partials in ws
/// and writes ws.d2FD_*.
void aba_2d(DynamicsWorkspace& ws);

/// dHdot/dq_j = sum_i d2H/dq_i dq_j * qdot_i.
Tensor3 get_hdot_d(const VecX& qdot, const Tensor4& d2H_dq2);

/// Partials of Cdot = dC_dq * vq + dC_dv * vv w.r.t. q and v, from the bias
/// second partials (the (v, q) mixed block is the index-permuted transpose of
/// the (q, v) tensor by symmetry of second partials).
void get_cdot_d(const VecX& vq, const VecX& vv, const Tensor3& d2ID_dq2,
                const Tensor3& d2ID_dqdv, const Tensor3& d2ID_dv2, MatX& dCdot_dq,
                MatX& dCdot_dv);

/// Populate every workspace field at homotopy state (q, v) with curve
/// velocities (vq, vv) defining the time-derivative directions.
void fill_workspace(const RobotModel& model, const VecX& q, const VecX& v, const VecX& vq,
                    const VecX& vv, DynamicsWorkspace& ws);

}  // namespace heatflow

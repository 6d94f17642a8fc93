#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "heatflow/rbd.hpp"
#include "test_models.hpp"
#include "test_util.hpp"

using namespace heatflow;

// Laddered verification: rnea/crba/aba are checked against closed-form hand
// values and each other; first derivatives against central differences of
// those; second derivatives against central differences of the (already
// validated) first derivatives, plus a direct double-difference spot check.

namespace {

struct State {
  VecX q, v;
};

State random_state(std::mt19937& rng, int n) {
  return {testutil::random_vec(rng, n, -1.5, 1.5), testutil::random_vec(rng, n, -1.0, 1.0)};
}

/// Potential energy from COM heights; gravity vector read off the model.
double potential(const RobotModel& m, const VecX& q) {
  auto poses = body_poses(m, q);
  double u = 0.0;
  for (std::size_t i = 0; i < m.bodies.size(); ++i) {
    Vec3 com_w = poses[i].position + poses[i].rotation * m.bodies[i].inertia.com;
    u -= m.bodies[i].inertia.mass * m.gravity.dot(com_w);
  }
  return u;
}

double total_energy(const RobotModel& m, const VecX& q, const VecX& v) {
  return 0.5 * v.dot(crba(m, q) * v) + potential(m, q);
}

}  // namespace

TEST_CASE("mass matrix is symmetric positive definite") {
  std::mt19937 rng(201);
  for (int n : {1, 2, 4, 6}) {
    RobotModel m = testutil::random_chain(rng, n);
    for (int rep = 0; rep < 4; ++rep) {
      State s = random_state(rng, n);
      MatX H = crba(m, s.q);
      CHECK((H - H.transpose()).norm() == 0.0);  // assembled symmetrically
      Eigen::LLT<MatX> llt(H);
      CHECK(llt.info() == Eigen::Success);
      VecX z = testutil::random_vec(rng, n);
      CHECK(z.dot(H * z) > 0.0);
    }
  }
}

TEST_CASE("crba columns equal gravity-free inverse-dynamics probes") {
  std::mt19937 rng(202);
  for (int n : {1, 3, 5}) {
    RobotModel m = testutil::random_chain(rng, n);
    State s = random_state(rng, n);
    MatX H = crba(m, s.q);
    VecX zero = VecX::Zero(n);
    for (int j = 0; j < n; ++j) {
      VecX probe = rnea(m, s.q, zero, VecX::Unit(n, j), /*use_gravity=*/false);
      CHECK(testutil::rel_err(probe, H.col(j)) < 1e-12);
    }
  }
}

TEST_CASE("point pendulum torques have the closed form tau = a + g cos q") {
  RobotModel m = parse_model(testutil::point_pendulum_text());
  std::mt19937 rng(203);
  for (int rep = 0; rep < 20; ++rep) {
    VecX q(1), v(1), a(1);
    q << testutil::uniform(rng, -3, 3);
    v << testutil::uniform(rng, -2, 2);
    a << testutil::uniform(rng, -2, 2);
    // H = m l^2 = 1, no Coriolis term for one revolute joint
    CHECK(rnea(m, q, v, a, false)(0) == doctest::Approx(a(0)).epsilon(1e-12));
    CHECK(rnea(m, q, v, a, true)(0) ==
          doctest::Approx(a(0) + 9.81 * std::cos(q(0))).epsilon(1e-12));
  }
}

TEST_CASE("point pendulum drift acceleration is -g cos q / l") {
  RobotModel m = parse_model(testutil::point_pendulum_text());
  VecX q = VecX::Zero(1), v = VecX::Zero(1), tau = VecX::Zero(1);
  CHECK(aba(m, q, v, tau)(0) == doctest::Approx(-9.81).epsilon(1e-13));
  q << 1.1;
  tau << 0.4;
  CHECK(aba(m, q, v, tau)(0) ==
        doctest::Approx(0.4 - 9.81 * std::cos(1.1)).epsilon(1e-13));
}

TEST_CASE("aba inverts rnea") {
  std::mt19937 rng(204);
  for (int n : {1, 2, 4, 6}) {
    RobotModel m = testutil::random_chain(rng, n);
    for (int rep = 0; rep < 5; ++rep) {
      State s = random_state(rng, n);
      VecX a_in = testutil::random_vec(rng, n, -2.0, 2.0);
      VecX tau = rnea(m, s.q, s.v, a_in);
      VecX a_out = aba(m, s.q, s.v, tau);
      CHECK(testutil::rel_err(a_out, a_in) < 1e-9);
    }
  }
}

TEST_CASE("aba agrees with the dense Hinv (tau - C) route") {
  std::mt19937 rng(205);
  for (int n : {2, 5}) {
    RobotModel m = testutil::random_chain(rng, n);
    State s = random_state(rng, n);
    VecX tau = testutil::random_vec(rng, n, -3.0, 3.0);
    VecX c = rnea(m, s.q, s.v, VecX::Zero(n));
    VecX dense = crba(m, s.q).llt().solve(tau - c);
    CHECK(testutil::rel_err(aba(m, s.q, s.v, tau), dense) < 1e-9);
  }
}

TEST_CASE("rnea_d matches central differences of rnea") {
  std::mt19937 rng(206);
  for (int n : {1, 3, 5}) {
    RobotModel m = testutil::random_chain(rng, n);
    State s = random_state(rng, n);
    VecX a = testutil::random_vec(rng, n, -1.0, 1.0);
    MatX dq, dv;
    rnea_d(m, s.q, s.v, a, dq, dv);

    MatX fd_q = testutil::numeric_jacobian(
        [&](const VecX& x) { return rnea(m, x, s.v, a); }, s.q, 1e-6);
    MatX fd_v = testutil::numeric_jacobian(
        [&](const VecX& x) { return rnea(m, s.q, x, a); }, s.v, 1e-6);
    CHECK(testutil::rel_err(dq, fd_q) < 1e-6);
    CHECK(testutil::rel_err(dv, fd_v) < 1e-6);
  }
}

TEST_CASE("mass_matrix_dq_action equals both the differenced and tensor routes") {
  std::mt19937 rng(207);
  for (int n : {2, 4}) {
    RobotModel m = testutil::random_chain(rng, n);
    VecX q = testutil::random_vec(rng, n, -1.5, 1.5);
    VecX w = testutil::random_vec(rng, n, -2.0, 2.0);
    MatX mw = mass_matrix_dq_action(m, q, w);

    const double h = 1e-6;
    for (int i = 0; i < n; ++i) {
      VecX qp = q, qm = q;
      qp(i) += h;
      qm(i) -= h;
      VecX fd = ((crba(m, qp) - crba(m, qm)) / (2.0 * h)) * w;
      CHECK(testutil::rel_err(mw.col(i), fd) < 1e-6);
    }

    // cross-check against the dual-mode crba tensor (both analytic)
    MatX H, Hdot;
    Tensor3 dH;
    Tensor4 d2H;
    crba_2d(m, q, VecX::Zero(n), H, Hdot, dH, d2H);
    for (int i = 0; i < n; ++i)
      CHECK(testutil::rel_err(mw.col(i), dH.slice_last(i) * w) < 1e-12);
  }
}

TEST_CASE("crba_d differentiates the mass matrix along qdot") {
  std::mt19937 rng(208);
  for (int n : {1, 3, 6}) {
    RobotModel m = testutil::random_chain(rng, n);
    State s = random_state(rng, n);
    MatX H, Hdot;
    crba_d(m, s.q, s.v, H, Hdot);
    CHECK(testutil::rel_err(H, crba(m, s.q)) < 1e-14);

    const double h = 1e-6;
    MatX fd = (crba(m, s.q + h * s.v) - crba(m, s.q - h * s.v)) / (2.0 * h);
    CHECK(testutil::rel_err(Hdot, fd) < 1e-6);
  }
}

TEST_CASE("crba_2d first and second partials") {
  std::mt19937 rng(209);
  for (int n : {2, 4}) {
    RobotModel m = testutil::random_chain(rng, n);
    VecX q = testutil::random_vec(rng, n, -1.5, 1.5);
    VecX qdot = testutil::random_vec(rng, n, -1.0, 1.0);
    MatX H, Hdot;
    Tensor3 dH;
    Tensor4 d2H;
    crba_2d(m, q, qdot, H, Hdot, dH, d2H);

    // Hdot must be the contraction of dH_dq with qdot
    MatX contr = MatX::Zero(n, n);
    for (int i = 0; i < n; ++i) contr += dH.slice_last(i) * qdot(i);
    CHECK(testutil::rel_err(Hdot, contr) < 1e-14);

    // first partials against differenced crba
    const double h1 = 1e-6;
    for (int i = 0; i < n; ++i) {
      VecX qp = q, qm = q;
      qp(i) += h1;
      qm(i) -= h1;
      MatX fd = (crba(m, qp) - crba(m, qm)) / (2.0 * h1);
      CHECK(testutil::rel_err(MatX(dH.slice_last(i)), fd) < 1e-6);
    }

    // second partials against differenced first partials (h = 1e-5)
    const double h2 = 1e-5;
    for (int j = 0; j < n; ++j) {
      VecX qp = q, qm = q;
      qp(j) += h2;
      qm(j) -= h2;
      MatX Hp, Hdp, Hm, Hdm;
      Tensor3 dHp, dHm;
      Tensor4 scratch;
      crba_2d(m, qp, qdot, Hp, Hdp, dHp, scratch);
      crba_2d(m, qm, qdot, Hm, Hdm, dHm, scratch);
      for (int i = 0; i < n; ++i) {
        MatX fd = (MatX(dHp.slice_last(i)) - MatX(dHm.slice_last(i))) / (2.0 * h2);
        CHECK(testutil::rel_err(MatX(d2H.slice(i, j)), fd) < 1e-5);
      }
    }

    // direct double difference of crba on one index pair
    const double h3 = 1e-4;
    int i = 0, j = n - 1;
    MatX pp = crba(m, q + h3 * (VecX::Unit(n, i) + VecX::Unit(n, j)));
    MatX pm = crba(m, q + h3 * (VecX::Unit(n, i) - VecX::Unit(n, j)));
    MatX mp = crba(m, q - h3 * (VecX::Unit(n, i) - VecX::Unit(n, j)));
    MatX mm = crba(m, q - h3 * (VecX::Unit(n, i) + VecX::Unit(n, j)));
    MatX fd2 = (pp - pm - mp + mm) / (4.0 * h3 * h3);
    CHECK(testutil::rel_err(MatX(d2H.slice(i, j)), fd2) < 1e-4);

    // index-pair symmetry and per-slice matrix symmetry
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b) {
        CHECK(testutil::rel_err(MatX(d2H.slice(a, b)), MatX(d2H.slice(b, a))) < 1e-9);
        CHECK((MatX(d2H.slice(a, b)) - MatX(d2H.slice(a, b)).transpose()).norm() < 1e-9);
      }
  }
}

TEST_CASE("aba_d partials, the explicit inverse, and the inverse-dynamics identity") {
  std::mt19937 rng(210);
  for (int n : {1, 2, 4}) {
    RobotModel m = testutil::random_chain(rng, n);
    State s = random_state(rng, n);
    VecX tau = VecX::Zero(n);
    VecX fd0;
    MatX dfq, dfv, hinv;
    aba_d(m, s.q, s.v, tau, fd0, dfq, dfv, hinv);

    CHECK(testutil::rel_err(fd0, aba(m, s.q, s.v, tau)) < 1e-14);
    CHECK(testutil::rel_err(hinv * crba(m, s.q), MatX::Identity(n, n)) < 1e-9);

    MatX fd_q = testutil::numeric_jacobian(
        [&](const VecX& x) { return aba(m, x, s.v, tau); }, s.q, 1e-6);
    MatX fd_v = testutil::numeric_jacobian(
        [&](const VecX& x) { return aba(m, s.q, x, tau); }, s.v, 1e-6);
    CHECK(testutil::rel_err(dfq, fd_q) < 1e-6);
    CHECK(testutil::rel_err(dfv, fd_v) < 1e-6);

    // independent route: dFD/dq = -Hinv * dID/dq evaluated at a = FD0
    MatX did_q, did_v;
    rnea_d(m, s.q, s.v, fd0, did_q, did_v);
    CHECK(testutil::rel_err(dfq, -hinv * did_q) < 1e-8);
    CHECK(testutil::rel_err(dfv, -hinv * did_v) < 1e-8);
  }
}

TEST_CASE("rnea_2d second partials of the bias") {
  std::mt19937 rng(211);

  // a pendulum value checkable by hand: d2C/dq2 = -g cos q
  RobotModel pend = parse_model(testutil::point_pendulum_text());
  VecX q1(1), v1(1);
  q1 << 0.8;
  v1 << 0.0;
  Tensor3 dq2, dqdv, dv2;
  rnea_2d(pend, q1, v1, VecX::Zero(1), dq2, dqdv, dv2);
  CHECK(dq2(0, 0, 0) == doctest::Approx(-9.81 * std::cos(0.8)).epsilon(1e-12));

  // gravity off at rest: every tensor entry vanishes
  rnea_2d(pend, q1, v1, VecX::Zero(1), dq2, dqdv, dv2, /*use_gravity=*/false);
  CHECK(dq2(0, 0, 0) == 0.0);
  CHECK(dqdv(0, 0, 0) == 0.0);
  CHECK(dv2(0, 0, 0) == 0.0);

  for (int n : {2, 3}) {
    RobotModel m = testutil::random_chain(rng, n);
    State s = random_state(rng, n);
    VecX a = VecX::Zero(n);
    rnea_2d(m, s.q, s.v, a, dq2, dqdv, dv2);

    const double h = 1e-5;
    for (int j = 0; j < n; ++j) {
      MatX qp_q, qp_v, qm_q, qm_v;
      VecX qp = s.q, qm = s.q;
      qp(j) += h;
      qm(j) -= h;
      rnea_d(m, qp, s.v, a, qp_q, qp_v);
      rnea_d(m, qm, s.v, a, qm_q, qm_v);
      CHECK(testutil::rel_err(MatX(dq2.slice_last(j)), (qp_q - qm_q) / (2 * h)) < 1e-5);

      VecX vp = s.v, vm = s.v;
      vp(j) += h;
      vm(j) -= h;
      rnea_d(m, s.q, vp, a, qp_q, qp_v);
      rnea_d(m, s.q, vm, a, qm_q, qm_v);
      CHECK(testutil::rel_err(MatX(dqdv.slice_last(j)), (qp_q - qm_q) / (2 * h)) < 1e-5);
      CHECK(testutil::rel_err(MatX(dv2.slice_last(j)), (qp_v - qm_v) / (2 * h)) < 1e-5);
    }
  }
}

TEST_CASE("aba_2d second partials of the drift dynamics") {
  std::mt19937 rng(212);
  for (int n : {2, 3}) {
    RobotModel m = testutil::random_chain(rng, n);
    State s = random_state(rng, n);
    DynamicsWorkspace ws(n);
    fill_workspace(m, s.q, s.v, VecX::Zero(n), VecX::Zero(n), ws);

    VecX tau = VecX::Zero(n);
    const double h = 1e-5;
    auto first = [&](const VecX& q, const VecX& v, MatX& dq, MatX& dv) {
      VecX f;
      MatX hi;
      aba_d(m, q, v, tau, f, dq, dv, hi);
    };

    for (int j = 0; j < n; ++j) {
      MatX pq, pv, mq, mv;
      VecX qp = s.q, qm = s.q;
      qp(j) += h;
      qm(j) -= h;
      first(qp, s.v, pq, pv);
      first(qm, s.v, mq, mv);
      CHECK(testutil::rel_err(MatX(ws.d2FD_dq2.slice_last(j)), (pq - mq) / (2 * h)) < 1e-4);

      VecX vp = s.v, vm = s.v;
      vp(j) += h;
      vm(j) -= h;
      first(s.q, vp, pq, pv);
      first(s.q, vm, mq, mv);
      CHECK(testutil::rel_err(MatX(ws.d2FD_dqdv.slice_last(j)), (pq - mq) / (2 * h)) < 1e-4);
      CHECK(testutil::rel_err(MatX(ws.d2FD_dv2.slice_last(j)), (pv - mv) / (2 * h)) < 1e-4);
    }
  }
}

TEST_CASE("get_hdot_d matches differenced crba_d") {
  std::mt19937 rng(213);
  int n = 3;
  RobotModel m = testutil::random_chain(rng, n);
  VecX q = testutil::random_vec(rng, n, -1.5, 1.5);
  VecX qdot = testutil::random_vec(rng, n, -1.0, 1.0);

  MatX H, Hdot;
  Tensor3 dH;
  Tensor4 d2H;
  crba_2d(m, q, qdot, H, Hdot, dH, d2H);
  Tensor3 dHdot = get_hdot_d(qdot, d2H);

  const double h = 1e-5;
  for (int j = 0; j < n; ++j) {
    VecX qp = q, qm = q;
    qp(j) += h;
    qm(j) -= h;
    MatX Hp, Hdp, Hm, Hdm;
    crba_d(m, qp, qdot, Hp, Hdp);
    crba_d(m, qm, qdot, Hm, Hdm);
    CHECK(testutil::rel_err(MatX(dHdot.slice_last(j)), (Hdp - Hdm) / (2 * h)) < 1e-5);
  }
}

TEST_CASE("get_cdot_d matches differenced bias rates and the pendulum hand value") {
  RobotModel pend = parse_model(testutil::point_pendulum_text());
  {
    VecX q(1), v(1), vq(1), vv(1);
    q << 0.5;
    v << 0.7;
    vq << 1.3;
    vv << -0.4;
    DynamicsWorkspace ws(1);
    fill_workspace(pend, q, v, vq, vv, ws);
    // C = g cos q: Cdot = -g sin(q) vq, dCdot/dq = -g cos(q) vq, dCdot/dv = 0
    CHECK(ws.Cdot(0) == doctest::Approx(-9.81 * std::sin(0.5) * 1.3).epsilon(1e-12));
    CHECK(ws.dCdot_dq(0, 0) == doctest::Approx(-9.81 * std::cos(0.5) * 1.3).epsilon(1e-12));
    CHECK(std::abs(ws.dCdot_dv(0, 0)) < 1e-14);
  }

  std::mt19937 rng(214);
  int n = 3;
  RobotModel m = testutil::random_chain(rng, n);
  VecX q = testutil::random_vec(rng, n, -1.5, 1.5);
  VecX v = testutil::random_vec(rng, n, -1.0, 1.0);
  VecX vq = testutil::random_vec(rng, n, -1.0, 1.0);
  VecX vv = testutil::random_vec(rng, n, -1.0, 1.0);
  DynamicsWorkspace ws(n);
  fill_workspace(m, q, v, vq, vv, ws);

  auto cdot_at = [&](const VecX& qq, const VecX& vvv) {
    MatX dq, dv;
    rnea_d(m, qq, vvv, VecX::Zero(n), dq, dv);
    return VecX(dq * vq + dv * vv);
  };
  MatX fd_q = testutil::numeric_jacobian([&](const VecX& x) { return cdot_at(x, v); }, q, 1e-5);
  MatX fd_v = testutil::numeric_jacobian([&](const VecX& x) { return cdot_at(q, x); }, v, 1e-5);
  CHECK(testutil::rel_err(ws.dCdot_dq, fd_q) < 1e-5);
  CHECK(testutil::rel_err(ws.dCdot_dv, fd_v) < 1e-5);
}

TEST_CASE("workspace fields are mutually consistent") {
  std::mt19937 rng(215);
  int n = 4;
  RobotModel m = testutil::random_chain(rng, n);
  VecX q = testutil::random_vec(rng, n, -1.5, 1.5);
  VecX v = testutil::random_vec(rng, n, -1.0, 1.0);
  VecX vq = testutil::random_vec(rng, n, -1.0, 1.0);
  VecX vv = testutil::random_vec(rng, n, -1.0, 1.0);
  DynamicsWorkspace ws(n);
  fill_workspace(m, q, v, vq, vv, ws);

  CHECK(testutil::rel_err(ws.H, crba(m, q)) < 1e-14);
  CHECK(testutil::rel_err(ws.Hinv * ws.H, MatX::Identity(n, n)) < 1e-9);
  CHECK(testutil::rel_err(ws.C, rnea(m, q, v, VecX::Zero(n))) < 1e-14);
  CHECK(testutil::rel_err(ws.FD0, aba(m, q, v, VecX::Zero(n))) < 1e-9);
  CHECK(testutil::rel_err(VecX(ws.H * ws.FD0), VecX(-ws.C)) < 1e-9);
}

TEST_CASE("forward dynamics conserves energy under unforced motion") {
  auto simulate = [](const RobotModel& m, VecX q, VecX v, double T, double dt) {
    int n = m.dof();
    VecX tau = VecX::Zero(n);
    auto deriv = [&](const VecX& qq, const VecX& vv_, VecX& dq, VecX& dv) {
      dq = vv_;
      dv = aba(m, qq, vv_, tau);
    };
    int steps = static_cast<int>(std::round(T / dt));
    for (int s = 0; s < steps; ++s) {
      VecX k1q, k1v, k2q, k2v, k3q, k3v, k4q, k4v;
      deriv(q, v, k1q, k1v);
      deriv(q + 0.5 * dt * k1q, v + 0.5 * dt * k1v, k2q, k2v);
      deriv(q + 0.5 * dt * k2q, v + 0.5 * dt * k2v, k3q, k3v);
      deriv(q + dt * k3q, v + dt * k3v, k4q, k4v);
      q += dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q);
      v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    }
    return std::make_pair(q, v);
  };

  {
    RobotModel m = parse_model(testutil::rod_pendulum_text(2));
    VecX q(2), v(2);
    q << 0.4, -0.3;
    v.setZero();
    double e0 = total_energy(m, q, v);
    auto [qf, vf] = simulate(m, q, v, 5.0, 1e-3);
    CHECK(std::abs(total_energy(m, qf, vf) - e0) < 1e-5 * (1.0 + std::abs(e0)));
  }
  {
    std::mt19937 rng(216);
    RobotModel m = testutil::random_chain(rng, 3, /*with_prismatic=*/false);
    VecX q = testutil::random_vec(rng, 3, -0.5, 0.5);
    VecX v = testutil::random_vec(rng, 3, -0.3, 0.3);
    double e0 = total_energy(m, q, v);
    auto [qf, vf] = simulate(m, q, v, 5.0, 1e-3);
    CHECK(std::abs(total_energy(m, qf, vf) - e0) < 1e-5 * (1.0 + std::abs(e0)));
  }
}

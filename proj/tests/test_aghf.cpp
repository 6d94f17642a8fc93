#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "heatflow/aghf.hpp"
#include "heatflow/rbd.hpp"
#include "test_models.hpp"
#include "test_util.hpp"

using namespace heatflow;

namespace {

/// Incremental-work integrand computed straight from crba/rnea, independent
/// of the aghf internals (no metric solve involved).
double direct_lagrangian(const RobotModel& m, double k, const VecX& X, const VecX& Xd) {
  int n = m.dof();
  VecX q = X.head(n), v = X.tail(n);
  VecX u = crba(m, q) * Xd.tail(n) + rnea(m, q, v, VecX::Zero(n));
  return k * (Xd.head(n) - v).squaredNorm() + u.squaredNorm();
}

/// Fourth-order central difference of a scalar path s -> f(s) at s = 0.
template <typename F>
double fd4(F&& f, double h) {
  return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h);
}

/// Euler-Lagrange evaluation of the flow right-hand side by nested
/// differencing of the Lagrangian, with the inverse metric applied through an
/// independent dense solve.
VecX omega_fd_oracle(const RobotModel& m, double k, const StatePoint& pt) {
  int n2 = static_cast<int>(pt.X.size());
  const double h = 1e-3;

  auto grad_Xd = [&](const VecX& X, const VecX& Xd) {
    VecX g(n2);
    for (int i = 0; i < n2; ++i)
      g(i) = fd4([&](double s) { return direct_lagrangian(m, k, X, Xd + s * VecX::Unit(n2, i)); }, h);
    return g;
  };

  VecX grad_X(n2);
  for (int i = 0; i < n2; ++i)
    grad_X(i) =
        fd4([&](double s) { return direct_lagrangian(m, k, pt.X + s * VecX::Unit(n2, i), pt.Xd); }, h);

  VecX dt_grad_Xd(n2);
  for (int i = 0; i < n2; ++i)
    dt_grad_Xd(i) =
        fd4([&](double s) { return grad_Xd(pt.X + s * pt.Xd, pt.Xd + s * pt.Xdd)(i); }, h);

  VecX el = dt_grad_Xd - grad_X;
  int n = n2 / 2;
  MatX H = crba(m, pt.X.head(n));
  VecX out(n2);
  out.head(n) = el.head(n) / k;
  out.tail(n) = (H * H).ldlt().solve(el.tail(n));
  return out;
}

StatePoint random_point(std::mt19937& rng, int n) {
  StatePoint pt;
  pt.X = testutil::random_vec(rng, 2 * n, -1.2, 1.2);
  pt.Xd = testutil::random_vec(rng, 2 * n, -1.0, 1.0);
  pt.Xdd = testutil::random_vec(rng, 2 * n, -1.0, 1.0);
  return pt;
}

AghfContext make_context(const RobotModel& m, const ChebGrid& cheb, const AghfParams& params,
                         const VecX& x0, const VecX& xf) {
  AghfContext ctx;
  ctx.model = &m;
  ctx.cheb = &cheb;
  ctx.params = params;
  ctx.x0 = x0;
  ctx.xf = xf;
  return ctx;
}

}  // namespace

TEST_CASE("parameter validation names the offending field") {
  AghfParams good;
  good.k = 10;
  good.p = 6;
  CHECK_NOTHROW(validate_params(good));

  AghfParams bad = good;
  bad.k = 0;
  CHECK_THROWS_AS(validate_params(bad), std::invalid_argument);
  bad = good;
  bad.p = 1;
  CHECK_THROWS_AS(validate_params(bad), std::invalid_argument);
  bad = good;
  bad.s_max = -1;
  CHECK_THROWS_AS(validate_params(bad), std::invalid_argument);
  bad = good;
  bad.k_cons = -0.5;
  CHECK_THROWS_AS(validate_params(bad), std::invalid_argument);
}

TEST_CASE("smooth step and penalty shape") {
  CHECK(smooth_step(0.0, 7.0) == 0.5);
  CHECK(smooth_step(5.0, 7.0) > smooth_step(0.1, 7.0));
  CHECK(smooth_step(1e3, 1.0) == doctest::Approx(1.0));
  CHECK(smooth_step(-1e3, 1.0) == doctest::Approx(0.0));

  // derivative spot checks against differencing
  for (double x : {-0.4, 0.0, 0.7}) {
    double fd1 = (smooth_step(x + 1e-6, 3.0) - smooth_step(x - 1e-6, 3.0)) / 2e-6;
    CHECK(smooth_step_d1(x, 3.0) == doctest::Approx(fd1).epsilon(1e-6));
    double fd2 = (smooth_step_d1(x + 1e-6, 3.0) - smooth_step_d1(x - 1e-6, 3.0)) / 2e-6;
    CHECK(smooth_step_d2(x, 3.0) == doctest::Approx(fd2).epsilon(1e-5));
  }

  CHECK(penalty_term(0.0, 4.0, 10.0) == 0.0);
  double prev = 0.0;
  for (double g = 0.05; g < 1.0; g += 0.05) {
    double b = penalty_term(g, 4.0, 10.0);
    CHECK(b > prev);  // strictly increasing on the violation side
    prev = b;
  }
  for (double g = -1.0; g < 1.0; g += 0.11) CHECK(penalty_term(g, 4.0, 10.0) >= 0.0);
}

TEST_CASE("inverse metric application") {
  MatX H1(1, 1);
  H1 << 2.0;
  VecX w(2);
  w << 10.0, 4.0;
  VecX out = metric_apply_inverse(H1, 10.0, w);
  CHECK(out(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(out(1) == doctest::Approx(1.0).epsilon(1e-14));

  CHECK(testutil::rel_err(metric_apply_inverse(MatX::Identity(3, 3), 1.0, VecX::Ones(6)),
                          VecX::Ones(6)) < 1e-14);

  std::mt19937 rng(301);
  for (int rep = 0; rep < 10; ++rep) {
    int n = 1 + rep % 4;
    MatX A = MatX::NullaryExpr(n, n, [&](int, int) { return testutil::uniform(rng, -1, 1); });
    MatX H = A * A.transpose() + MatX::Identity(n, n);
    double k = testutil::uniform(rng, 0.5, 50.0);
    VecX x = testutil::random_vec(rng, 2 * n);
    VecX gx(2 * n);
    gx.head(n) = k * x.head(n);
    gx.tail(n) = H * (H * x.tail(n));
    CHECK(testutil::rel_err(metric_apply_inverse(H, k, gx), x) < 1e-10);
  }
}

TEST_CASE("lagrangian forms agree and vanish on feasible points") {
  std::mt19937 rng(302);
  for (int n : {1, 2, 3}) {
    RobotModel m = testutil::random_chain(rng, n);
    DynamicsWorkspace ws(n);
    for (int rep = 0; rep < 5; ++rep) {
      StatePoint pt = random_point(rng, n);
      fill_workspace(m, pt.X.head(n), pt.X.tail(n), pt.Xd.head(n), pt.Xd.tail(n), ws);

      double L = lagrangian(pt, ws, 37.0);
      CHECK(L >= 0.0);
      CHECK(testutil::rel_err(L, direct_lagrangian(m, 37.0, pt.X, pt.Xd)) < 1e-10);

      // doubling k doubles exactly the velocity-consistency term
      double L2 = lagrangian(pt, ws, 74.0);
      double expected = 37.0 * (pt.Xd.head(n) - pt.X.tail(n)).squaredNorm();
      CHECK(L2 - L == doctest::Approx(expected).epsilon(1e-10));

      // a dynamically consistent point has zero cost
      StatePoint feas = pt;
      feas.Xd.head(n) = feas.X.tail(n);
      feas.Xd.tail(n) = ws.FD0;
      fill_workspace(m, feas.X.head(n), feas.X.tail(n), feas.Xd.head(n), feas.Xd.tail(n), ws);
      feas.Xd.tail(n) = ws.FD0;
      CHECK(lagrangian(feas, ws, 37.0) == 0.0);
    }
  }
}

TEST_CASE("omega vanishes at an unforced equilibrium") {
  std::mt19937 rng(303);
  RobotModel m = testutil::random_chain(rng, 2);
  m.gravity.setZero();
  StatePoint pt;
  pt.X = VecX::Zero(4);
  pt.X.head(2) << 0.3, -0.8;  // any fixed pose, zero velocity
  pt.Xd = VecX::Zero(4);
  pt.Xdd = VecX::Zero(4);
  CHECK(omega(pt, m, 12.0).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("omega reduces to the acceleration terms on feasible points") {
  std::mt19937 rng(304);
  for (int n : {1, 2, 3}) {
    RobotModel m = testutil::random_chain(rng, n);
    StatePoint pt = random_point(rng, n);
    VecX q = pt.X.head(n), v = pt.X.tail(n);
    pt.Xd.head(n) = v;
    pt.Xd.tail(n) = aba(m, q, v, VecX::Zero(n));

    // on a feasible point every residual-driven term drops out and only
    // 2*(Xdd_P1 - Xd_P2) and the metric image of the gamma terms survive
    MatX H, Hdot;
    crba_d(m, q, pt.Xd.head(n), H, Hdot);
    MatX dC_dq, dC_dv;
    rnea_d(m, q, v, VecX::Zero(n), dC_dq, dC_dv);
    VecX C = rnea(m, q, v, VecX::Zero(n));
    VecX Cdot = dC_dq * pt.Xd.head(n) + dC_dv * pt.Xd.tail(n);
    VecX gamma = Hdot * (H * pt.Xd.tail(n)).eval() + H * (Hdot * pt.Xd.tail(n)).eval() +
                 H * (H * pt.Xdd.tail(n)).eval() + Hdot * C + H * Cdot;
    VecX expect(2 * n);
    expect.head(n) = 2.0 * (pt.Xdd.head(n) - pt.Xd.tail(n));
    expect.tail(n) = (H * H).ldlt().solve(2.0 * gamma);

    VecX got = omega(pt, m, 55.0);
    CHECK(testutil::rel_err(got, expect) < 1e-10);
  }
}

TEST_CASE("omega matches the Euler-Lagrange differencing oracle") {
  std::mt19937 rng(305);
  for (int links : {1, 2}) {
    RobotModel m = parse_model(testutil::rod_pendulum_text(links));
    for (int rep = 0; rep < 10; ++rep) {
      double k = (rep % 2 == 0) ? 20.0 : 150.0;
      StatePoint pt = random_point(rng, links);
      VecX got = omega(pt, m, k);
      VecX ref = omega_fd_oracle(m, k, pt);
      CHECK(testutil::rel_err(got, ref) < 1e-5);
    }
  }
}

TEST_CASE("omega_jacobian: exact acceleration block and FD agreement") {
  std::mt19937 rng(306);
  for (int n : {1, 2}) {
    RobotModel m = parse_model(testutil::rod_pendulum_text(n));
    for (int rep = 0; rep < 10; ++rep) {
      double k = (rep % 2 == 0) ? 20.0 : 500.0;
      StatePoint pt = random_point(rng, n);
      MatX dX, dXd, dXdd;
      omega_jacobian(pt, m, k, dX, dXd, dXdd);

      for (int i = 0; i < 2 * n; ++i)
        for (int j = 0; j < 2 * n; ++j) {
          if (i == j)
            CHECK(dXdd(i, j) == 2.0);
          else
            CHECK(dXdd(i, j) == 0.0);  // structural zero, no tolerance
        }

      const double h = 1e-5;
      MatX fdX(2 * n, 2 * n), fdXd(2 * n, 2 * n), fdXdd(2 * n, 2 * n);
      for (int j = 0; j < 2 * n; ++j) {
        StatePoint pp = pt, pm = pt;
        pp.X(j) += h;
        pm.X(j) -= h;
        fdX.col(j) = (omega(pp, m, k) - omega(pm, m, k)) / (2 * h);
        pp = pt;
        pm = pt;
        pp.Xd(j) += h;
        pm.Xd(j) -= h;
        fdXd.col(j) = (omega(pp, m, k) - omega(pm, m, k)) / (2 * h);
        pp = pt;
        pm = pt;
        pp.Xdd(j) += h;
        pm.Xdd(j) -= h;
        fdXdd.col(j) = (omega(pp, m, k) - omega(pm, m, k)) / (2 * h);
      }
      CHECK(testutil::rel_err(dX, fdX) < 1e-4);
      CHECK(testutil::rel_err(dXd, fdXd) < 1e-4);
      CHECK(testutil::rel_err(dXdd, fdXdd) < 1e-6);
    }
  }
}

TEST_CASE("constraint clearance values") {
  RobotModel m = parse_model(testutil::point_pendulum_text());
  ObstacleSet obs;
  obs.frames = {m.frame_index("tip")};
  obs.spheres = {{Vec3(1, 0, 0), 0.3}, {Vec3(1.3, 0, 0), 0.3}, {Vec3(1.6, 0, 0), 0.3}};

  VecX q = VecX::Zero(1);  // tip at (1, 0, 0)
  VecX g = constraint_value(q, m, obs);
  REQUIRE(g.size() == 3);
  CHECK(g(0) == doctest::Approx(0.3).epsilon(1e-14));   // frame at the center
  CHECK(g(1) == doctest::Approx(0.0).epsilon(1e-14));   // on the surface
  CHECK(g(2) == doctest::Approx(-0.3).epsilon(1e-14));  // one diameter away
}

TEST_CASE("penalty right-hand side") {
  RobotModel m = parse_model(testutil::point_pendulum_text());
  const double k = 9.0;

  SUBCASE("inactive cases give exactly zero") {
    StatePoint pt;
    pt.X = VecX::Zero(2);
    pt.Xd = VecX::Zero(2);
    pt.Xdd = VecX::Zero(2);

    ObstacleSet none;
    CHECK(penalty_rhs(pt, m, none, 3.0, 10.0, MatX(), k).norm() == 0.0);

    ObstacleSet obs;
    obs.frames = {m.frame_index("tip")};
    obs.spheres = {{Vec3(1.3, 0, 0), 0.3}};  // tip exactly on the surface, g = 0
    CHECK(penalty_rhs(pt, m, obs, 3.0, 10.0, MatX(), k).norm() == 0.0);
    CHECK(penalty_rhs(pt, m, obs, 0.0, 10.0, MatX(), k).norm() == 0.0);
  }

  SUBCASE("saturation deep in free space") {
    ObstacleSet obs;
    obs.frames = {m.frame_index("tip")};
    obs.spheres = {{Vec3(5, 0, 0), 0.5}};  // clearance ~3.5, c*|g| >> 20
    StatePoint pt;
    pt.X = VecX::Zero(2);
    pt.Xd = VecX::Zero(2);
    pt.Xdd = VecX::Zero(2);
    double k_cons = 1e4;
    VecX r = penalty_rhs(pt, m, obs, k_cons, 50.0, MatX(), k);
    CHECK(r.lpNorm<Eigen::Infinity>() < 1e-12 * k_cons);
  }

  SUBCASE("violating frame is pushed outward") {
    ObstacleSet obs;
    obs.frames = {m.frame_index("tip")};
    obs.spheres = {{Vec3(1, 0.3, 0), 0.5}};  // tip at (1,0,0) is inside
    StatePoint pt;
    pt.X = VecX::Zero(2);
    pt.Xd = VecX::Zero(2);
    pt.Xdd = VecX::Zero(2);
    VecX r = penalty_rhs(pt, m, obs, 2.0, 4.0, MatX(), k);
    CHECK(r(0) < 0.0);  // decreasing q moves the tip away from the sphere
    CHECK(r(1) == 0.0);  // velocity block untouched

    // gradient route: -k * rhs_top must equal the differenced total penalty
    auto total_b = [&](double q0) {
      VecX qv(1);
      qv << q0;
      VecX g = constraint_value(qv, m, obs);
      double acc = 0;
      for (Eigen::Index j = 0; j < g.size(); ++j) acc += penalty_term(g(j), 2.0, 4.0);
      return acc;
    };
    double fd = (total_b(1e-5) - total_b(-1e-5)) / 2e-5;
    CHECK(-k * r(0) == doctest::Approx(fd).epsilon(1e-6));
  }

  SUBCASE("multi-link gradient against differencing") {
    std::mt19937 rng(307);
    RobotModel chain = testutil::random_chain(rng, 3);
    ObstacleSet obs;
    obs.frames = {chain.frame_index("tip"), chain.frame_index("mid")};
    VecX q0 = testutil::random_vec(rng, 3, -0.8, 0.8);
    Vec3 near = forward_kinematics(chain, q0).at(0).position + Vec3(0.05, -0.02, 0.04);
    obs.spheres = {{near, 0.4}, {Vec3(0.2, 0.1, 0.3), 0.6}};

    StatePoint pt;
    pt.X = VecX::Zero(6);
    pt.X.head(3) = q0;
    pt.Xd = VecX::Zero(6);
    pt.Xdd = VecX::Zero(6);
    VecX r = penalty_rhs(pt, chain, obs, 3.0, 5.0, MatX(), k);
    CHECK(r.tail(3).norm() == 0.0);

    VecX fd = testutil::numeric_gradient(
        [&](const VecX& qq) {
          VecX g = constraint_value(qq, chain, obs);
          double acc = 0;
          for (Eigen::Index j = 0; j < g.size(); ++j) acc += penalty_term(g(j), 3.0, 5.0);
          return acc;
        },
        q0, 1e-5);
    CHECK(testutil::rel_err(VecX(-k * r.head(3)), fd) < 1e-6);
  }
}

TEST_CASE("extract_controls") {
  RobotModel m = parse_model(testutil::point_pendulum_text());

  SUBCASE("static grid needs exactly the gravity torque") {
    ChebGrid cheb = make_grid(10, 2.0);
    for (double qstar : {0.0, 0.7}) {
      HomotopyGrid grid;
      grid.values = MatX::Zero(11, 2);
      grid.values.col(0).setConstant(qstar);
      MatX U = extract_controls(grid, cheb, m);
      REQUIRE(U.cols() == 1);
      REQUIRE(U.rows() == 11);
      for (int i = 0; i <= 10; ++i)
        CHECK(U(i, 0) == doctest::Approx(9.81 * std::cos(qstar)).epsilon(1e-9));
    }
  }

  SUBCASE("unforced trajectory extracts near-zero controls") {
    // moderate amplitude keeps the complex-time poles of the pendulum motion
    // far enough away for spectral convergence at this degree
    double T = 2.0;
    const int p = 32;
    ChebGrid cheb = make_grid(p, T);
    VecX times = cheb.times();

    HomotopyGrid grid;
    grid.values.resize(p + 1, 2);
    VecX q(1), v(1);
    q << 0.5;
    v << 0.0;
    double t = 0.0;
    VecX tau = VecX::Zero(1);
    for (int i = 0; i <= p; ++i) {
      double target = times(i);
      int steps = std::max(1, static_cast<int>(std::ceil((target - t) / 1e-5)));
      double dt = (target - t) / steps;
      for (int s = 0; s < steps; ++s) {
        // classic RK4 on the unforced dynamics
        auto f = [&](const VecX& qq, const VecX& vv) {
          return std::make_pair(vv, VecX(aba(m, qq, vv, tau)));
        };
        auto [k1q, k1v] = f(q, v);
        auto [k2q, k2v] = f(q + 0.5 * dt * k1q, v + 0.5 * dt * k1v);
        auto [k3q, k3v] = f(q + 0.5 * dt * k2q, v + 0.5 * dt * k2v);
        auto [k4q, k4v] = f(q + dt * k3q, v + dt * k3v);
        q += dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q);
        v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
      }
      t = target;
      grid.values(i, 0) = q(0);
      grid.values(i, 1) = v(0);
    }

    MatX U = extract_controls(grid, cheb, m);
    CHECK(U.cwiseAbs().maxCoeff() < 1e-4);
  }
}

TEST_CASE("action functional") {
  SUBCASE("zero without gravity at rest") {
    std::mt19937 rng(308);
    RobotModel m = testutil::random_chain(rng, 2);
    m.gravity.setZero();
    ChebGrid cheb = make_grid(8, 1.5);
    HomotopyGrid grid;
    grid.values = MatX::Zero(9, 4);
    grid.values.col(0).setConstant(0.4);
    grid.values.col(1).setConstant(-0.2);
    AghfParams params;
    params.k = 100.0;
    // differentiating the constant columns leaves ~1e-16 noise per entry,
    // which enters the action squared
    CHECK(action_functional(grid, cheb, m, params, ObstacleSet{}) < 1e-20);
  }

  SUBCASE("matches dense trapezoid quadrature") {
    RobotModel m = parse_model(testutil::rod_pendulum_text(2));
    double T = 1.8;
    ChebGrid cheb = make_grid(12, T);
    VecX x0(4), xf(4);
    x0 << -M_PI / 2, -M_PI / 2, 0, 0;
    xf << M_PI / 2, M_PI / 2, 0, 0;
    HomotopyGrid grid;
    grid.values.resize(13, 4);
    for (int i = 0; i <= 12; ++i)
      grid.values.row(i) = (x0 + 0.5 * (cheb.nodes(i) + 1.0) * (xf - x0)).transpose();

    AghfParams params;
    params.k = 40.0;
    double got = action_functional(grid, cheb, m, params, ObstacleSet{});

    MatX deriv_nodes = cheb.time_scale() * (cheb.D * grid.values);
    int samples = 10000;
    double acc = 0.0, prev = 0.0;
    for (int j = 0; j <= samples; ++j) {
      double tau = -1.0 + 2.0 * j / samples;
      VecX X = interpolate(cheb.nodes, grid.values, tau);
      VecX Xd = interpolate(cheb.nodes, deriv_nodes, tau);
      double L = direct_lagrangian(m, params.k, X, Xd);
      if (j > 0) acc += 0.5 * (prev + L) * (T / samples);
      prev = L;
    }
    CHECK(testutil::rel_err(got, acc) < 1e-3);
  }

  SUBCASE("a violated obstacle strictly increases the action") {
    RobotModel m = parse_model(testutil::rod_pendulum_text(2));
    ChebGrid cheb = make_grid(10, 2.0);
    VecX x0(4), xf(4);
    x0 << -M_PI / 2, 0, 0, 0;
    xf << M_PI / 2, 0, 0, 0;
    HomotopyGrid grid;
    grid.values.resize(11, 4);
    for (int i = 0; i <= 10; ++i)
      grid.values.row(i) = (x0 + 0.5 * (cheb.nodes(i) + 1.0) * (xf - x0)).transpose();

    AghfParams params;
    params.k = 40.0;
    double base = action_functional(grid, cheb, m, params, ObstacleSet{});

    ObstacleSet obs;
    obs.frames = {m.frame_index("tip")};
    obs.spheres = {{Vec3(0, -2, 0), 0.5}};  // the swept tip passes near (0,-2,0)
    AghfParams pc = params;
    pc.k_cons = 10.0;
    pc.c_cons = 5.0;
    double with_obs = action_functional(grid, cheb, m, pc, obs);
    CHECK(with_obs > base);
  }
}

TEST_CASE("system_rhs shapes, per-node recomputation, and thread invariance") {
  std::mt19937 rng(309);
  RobotModel m = parse_model(testutil::rod_pendulum_text(2));
  AghfParams params;
  params.k = 30.0;
  params.p = 6;
  params.k_cons = 2.0;
  params.c_cons = 5.0;
  ChebGrid cheb = make_grid(params.p, 2.0);

  VecX x0(4), xf(4);
  x0 << -M_PI / 2, 0, 0, 0;
  xf << M_PI / 2, 0, 0, 0;
  AghfContext ctx = make_context(m, cheb, params, x0, xf);
  ctx.obstacles.frames = {m.frame_index("tip")};
  ctx.obstacles.spheres = {{Vec3(0.3, -1.5, 0), 0.4}};

  MatX interior = MatX::NullaryExpr(params.p - 1, 4, [&](int, int) {
    return testutil::uniform(rng, -1.0, 1.0);
  });
  MatX rhs = system_rhs(interior, ctx);
  REQUIRE(rhs.rows() == params.p - 1);
  REQUIRE(rhs.cols() == 4);

  // per-node recomputation from scratch
  MatX full(params.p + 1, 4);
  full.row(0) = x0.transpose();
  full.middleRows(1, params.p - 1) = interior;
  full.row(params.p) = xf.transpose();
  double ts = cheb.time_scale();
  for (int i = 1; i < params.p; ++i) {
    StatePoint pt;
    pt.X = full.transpose() * VecX::Unit(params.p + 1, i);
    pt.Xd = ts * full.transpose() * cheb.D.row(i).transpose();
    pt.Xdd = ts * ts * full.transpose() * cheb.D2.row(i).transpose();
    VecX expect = omega(pt, m, params.k) +
                  penalty_rhs(pt, m, ctx.obstacles, params.k_cons, params.c_cons, MatX(), params.k);
    CHECK(testutil::rel_err(VecX(rhs.row(i - 1).transpose()), expect) < 1e-12);
  }

  // p = 2 edge: exactly one interior row
  AghfParams p2 = params;
  p2.p = 2;
  ChebGrid cheb2 = make_grid(2, 2.0);
  AghfContext ctx2 = make_context(m, cheb2, p2, x0, xf);
  MatX one_row = MatX::Zero(1, 4);
  CHECK(system_rhs(one_row, ctx2).rows() == 1);

  // thread count must not change a single bit
  AghfContext ctx4 = ctx;
  ctx4.threads = 4;
  MatX rhs4 = system_rhs(interior, ctx4);
  CHECK((rhs - rhs4).cwiseAbs().maxCoeff() == 0.0);

  MatX J1 = system_jacobian(interior, ctx);
  MatX J4 = system_jacobian(interior, ctx4);
  CHECK((J1 - J4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("system_jacobian agrees with differenced system_rhs") {
  std::mt19937 rng(310);
  for (int links : {1, 2}) {
    RobotModel m = parse_model(testutil::rod_pendulum_text(links));
    int n2 = 2 * links;
    VecX x0 = VecX::Zero(n2), xf = VecX::Zero(n2);
    x0.head(links).setConstant(-M_PI / 2);
    xf.head(links).setConstant(M_PI / 2);

    for (int p : {4, 6, 8}) {
      AghfParams params;
      params.k = 25.0;
      params.p = p;
      ChebGrid cheb = make_grid(p, 2.0);
      AghfContext ctx = make_context(m, cheb, params, x0, xf);

      MatX interior = MatX::NullaryExpr(p - 1, n2, [&](int, int) {
        return testutil::uniform(rng, -0.9, 0.9);
      });
      MatX J = system_jacobian(interior, ctx);
      int dim = (p - 1) * n2;
      REQUIRE(J.rows() == dim);
      REQUIRE(J.cols() == dim);

      const double h = 1e-6;
      MatX Jfd(dim, dim);
      for (int r = 0; r < p - 1; ++r)
        for (int c = 0; c < n2; ++c) {
          MatX ip = interior, im = interior;
          ip(r, c) += h;
          im(r, c) -= h;
          MatX diff = (system_rhs(ip, ctx) - system_rhs(im, ctx)) / (2 * h);
          Jfd.col(r * n2 + c) = Eigen::Map<VecX>(MatX(diff.transpose()).data(), dim);
        }
      CHECK(testutil::rel_err(J, Jfd) < 1e-4);

      // Chebyshev coupling is dense: every off-diagonal block carries weight
      for (int r = 0; r < p - 1; ++r)
        for (int c = 0; c < p - 1; ++c)
          if (r != c) CHECK(J.block(r * n2, c * n2, n2, n2).cwiseAbs().maxCoeff() > 0.0);
    }
  }
}

TEST_CASE("system_jacobian single-interior-node hand assembly") {
  RobotModel m = parse_model(testutil::point_pendulum_text());
  AghfParams params;
  params.k = 18.0;
  params.p = 2;
  ChebGrid cheb = make_grid(2, 2.0);
  VecX x0(2), xf(2);
  x0 << -1.0, 0.0;
  xf << 1.0, 0.0;
  AghfContext ctx = make_context(m, cheb, params, x0, xf);

  MatX interior(1, 2);
  interior << 0.2, -0.4;
  MatX J = system_jacobian(interior, ctx);

  MatX full(3, 2);
  full.row(0) = x0.transpose();
  full.row(1) = interior.row(0);
  full.row(2) = xf.transpose();
  double ts = cheb.time_scale();
  StatePoint pt;
  pt.X = interior.row(0).transpose();
  pt.Xd = ts * full.transpose() * cheb.D.row(1).transpose();
  pt.Xdd = ts * ts * full.transpose() * cheb.D2.row(1).transpose();
  MatX dX, dXd, dXdd;
  omega_jacobian(pt, m, params.k, dX, dXd, dXdd);
  MatX expect = dX + dXd * (ts * cheb.D(1, 1)) +
                2.0 * ts * ts * cheb.D2(1, 1) * MatX::Identity(2, 2);
  CHECK(testutil::rel_err(J, expect) < 1e-14);
}

TEST_CASE("constrained system_jacobian adds exactly the curvature term") {
  RobotModel m = parse_model(testutil::rod_pendulum_text(2));
  AghfParams params;
  params.k = 30.0;
  params.p = 5;
  ChebGrid cheb = make_grid(params.p, 2.0);
  VecX x0 = VecX::Zero(4), xf = VecX::Zero(4);
  x0(0) = -1.0;
  xf(0) = 1.0;
  AghfContext ctx = make_context(m, cheb, params, x0, xf);

  std::mt19937 rng(311);
  MatX interior = MatX::NullaryExpr(params.p - 1, 4, [&](int, int) {
    return testutil::uniform(rng, -0.8, 0.8);
  });
  MatX J_free = system_jacobian(interior, ctx);

  AghfContext ctx_obs = ctx;
  ctx_obs.params.k_cons = 7.0;
  ctx_obs.params.c_cons = 3.0;
  ctx_obs.obstacles.frames = {m.frame_index("tip")};
  ctx_obs.obstacles.spheres = {{Vec3(0.5, -1.0, 0), 0.8}};
  MatX J_obs = system_jacobian(interior, ctx_obs);

  MatX diff = J_obs - J_free;
  for (int i = 1; i < params.p; ++i) {
    VecX q = interior.row(i - 1).head(2).transpose();
    VecX g = constraint_value(q, m, ctx_obs.obstacles);
    MatX grad = constraint_gradient(q, m, ctx_obs.obstacles);
    MatX gn = MatX::Zero(2, 2);
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      double c = ctx_obs.params.c_cons;
      double coeff =
          ctx_obs.params.k_cons * (2.0 * smooth_step(g(j), c) + 4.0 * g(j) * smooth_step_d1(g(j), c) +
                                   g(j) * g(j) * smooth_step_d2(g(j), c));
      gn -= (coeff / params.k) * (grad.col(j) * grad.col(j).transpose());
    }
    MatX block = diff.block((i - 1) * 4, (i - 1) * 4, 4, 4);
    CHECK(testutil::rel_err(MatX(block.topLeftCorner(2, 2)), gn) < 1e-12);
    CHECK(block.bottomRows(2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(block.topRightCorner(2, 2).cwiseAbs().maxCoeff() == 0.0);
  }
}

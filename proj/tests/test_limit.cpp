#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "morsenb/limit.hpp"
#include "morsenb/spectral.hpp"
#include "oracles.hpp"

using namespace morsenb;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("winding index formulas", "[limit]") {
  CHECK(index_i(1.0) == 1);
  CHECK(index_i(0.5) == 1);
  CHECK(index_i(1.5) == 3);  // 2/0.5 = 4, largest integer strictly below
  CHECK(index_i_lambda(1.0, 0.0) == 1);
  CHECK(index_i_lambda(1.0, 3.0) == 3);   // 2*2/1 = 4
  CHECK(index_i_lambda(1.0, 0.25) == 2);  // 2*sqrt(1.25) ~ 2.236

  // agreement at lambda = 0 and monotonicity in lambda on a grid
  for (double a : {0.3, 0.7, 1.0, 1.3, 1.7}) {
    CHECK(index_i_lambda(a, 0.0) == index_i(a));
    int prev = 0;
    for (double l : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
      const int k = index_i_lambda(a, l);
      CHECK(k >= prev);
      prev = k;
    }
  }
  // stepwise increase toward alpha = 2
  CHECK(index_i(1.9) == 19);

  CHECK_THROWS_AS(index_i(0.0), InvalidArgument);
  CHECK_THROWS_AS(index_i(2.0), InvalidArgument);
  CHECK_THROWS_AS(index_i(-1.0), InvalidArgument);
  CHECK_THROWS_AS(index_i_lambda(1.0, -0.5), InvalidArgument);
  CHECK_THROWS_AS(index_i_lambda(1.0, kLambdaInfinity), InvalidArgument);
}

TEST_CASE("limit orbit reproduces the zero-energy Kepler parabola", "[limit]") {
  const auto orb = integrate_limit_orbit(1.0, 0.0, 1.0, 10.5, 2);
  REQUIRE(orb.energy_residual <= 1e-9);
  REQUIRE(orb.pericenter_norm == 1.0);

  for (double s : {-10.0, -7.3, -2.0, -0.41, 0.0, 0.37, 1.0, 4.9, 8.2, 10.0}) {
    const Eigen::Vector2d op = oracle::parabola_position(s);
    const Eigen::Vector2d ov = oracle::parabola_velocity(s);
    Eigen::VectorXd p, v;
    orb.eval(s, &p, &v);
    CHECK_THAT(p[0], WithinAbs(op[0], 1e-6));
    CHECK_THAT(p[1], WithinAbs(op[1], 1e-6));
    CHECK_THAT(v[0], WithinAbs(ov[0], 1e-6));
    CHECK_THAT(v[1], WithinAbs(ov[1], 1e-6));
  }
}

TEST_CASE("limit orbit symmetry and planarity", "[limit]") {
  SECTION("time reversal reflects across the pericenter axis") {
    const auto orb = integrate_limit_orbit(1.3, 0.7, 2.0, 8.0, 2);
    for (double s : {0.3, 1.1, 2.9, 5.4, 7.6}) {
      Eigen::VectorXd pf, pb;
      orb.eval(s, &pf, nullptr);
      orb.eval(-s, &pb, nullptr);
      CHECK_THAT(pb[0], WithinAbs(pf[0], 1e-8));
      CHECK_THAT(pb[1], WithinAbs(-pf[1], 1e-8));
    }
  }
  SECTION("coordinate-plane start in d = 3 stays planar") {
    const auto orb = integrate_limit_orbit(1.0, 1.0, 1.0, 20.0, 3);
    CHECK(orb.planarity_residual <= 1e-9);
  }
  SECTION("randomly embedded plane in d = 3 stays planar") {
    std::mt19937_64 rng(91);
    std::normal_distribution<double> nd;
    OrbitOptions opt;
    opt.plane_e1 = Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return nd(rng); });
    opt.plane_e2 = Eigen::VectorXd::NullaryExpr(3, [&](Eigen::Index) { return nd(rng); });
    const auto orb = integrate_limit_orbit(0.8, 0.5, 1.5, 30.0, 3, opt);
    CHECK(orb.planarity_residual <= 1e-7);
    CHECK(orb.energy_residual <= 1e-9);
  }
}

TEST_CASE("zero energy holds along orbits across the parameter grid", "[limit]") {
  for (double a : {0.5, 1.0, 1.5}) {
    for (double l : {0.0, 1.0, 3.0}) {
      const auto orb = integrate_limit_orbit(a, l, 1.0, 50.0, 2);
      INFO("alpha " << a << " lambda " << l);
      CHECK(orb.energy_residual <= 1e-9);
      // radius diverges on both sides for finite lambda
      CHECK(orb.samples.front().pos.norm() > 2.0);
      CHECK(orb.samples.back().pos.norm() > 2.0);
    }
  }
}

TEST_CASE("infinite-lambda orbit is the unit circle", "[limit]") {
  const auto orb = integrate_limit_orbit(1.0, kLambdaInfinity, 1.0, 25.0, 2);
  REQUIRE(orb.energy_residual <= 1e-9);
  double rmin = 1e300, rmax = 0.0;
  for (const auto& smp : orb.samples) {
    rmin = std::min(rmin, smp.pos.norm());
    rmax = std::max(rmax, smp.pos.norm());
  }
  CHECK_THAT(rmin, WithinAbs(1.0, 1e-8));
  CHECK_THAT(rmax, WithinAbs(1.0, 1e-8));
  // constant angular speed sqrt(2M)
  CHECK_THAT(orb.swept_angle, WithinRel(2.0 * 25.0 * std::sqrt(2.0), 1e-8));
}

TEST_CASE("asymptotic angle closed form", "[limit]") {
  CHECK_THAT(asymptotic_angle_theory(1.0, 0.0), WithinRel(2.0 * M_PI, 1e-15));
  CHECK_THAT(asymptotic_angle_theory(1.0, 3.0), WithinRel(4.0 * M_PI, 1e-15));
  CHECK_THAT(asymptotic_angle_theory(1.5, 0.0), WithinRel(4.0 * M_PI, 1e-15));
  CHECK_THROWS_AS(asymptotic_angle_theory(2.0, 0.0), InvalidArgument);

  // tail at the pericenter radius is half the full sweep
  CHECK_THAT(asymptotic_tail_angle(1.0, 0.0, 1.0), WithinRel(M_PI, 1e-12));
  CHECK_THAT(asymptotic_tail_angle(1.2, 2.0, 1.0),
             WithinRel(0.5 * asymptotic_angle_theory(1.2, 2.0), 1e-12));
}

TEST_CASE("measured sweep matches the closed form across the grid", "[limit]") {
  for (double a : {1.0, 1.5}) {
    for (double l : {0.0, 1.0, 3.0}) {
      const double R = 1e4;
      const auto orb = integrate_limit_orbit(a, l, 1.0, s_for_radius(a, 1.0, R), 2);
      const double got = asymptotic_angle_numeric(orb, R);
      const double want = asymptotic_angle_theory(a, l);
      INFO("alpha " << a << " lambda " << l);
      CHECK_THAT(got, WithinRel(want, 1e-3));
    }
  }
}

TEST_CASE("sweep estimate at large radius and raw monotone convergence", "[limit]") {
  const double R_top = 1e6;
  const auto orb = integrate_limit_orbit(1.0, 0.0, 1.0, s_for_radius(1.0, 1.0, R_top), 2);
  const double want = asymptotic_angle_theory(1.0, 0.0);

  CHECK_THAT(asymptotic_angle_numeric(orb, R_top), WithinAbs(want, 1e-3));

  // without the tail the estimate climbs toward the closed form from below
  double prev = 0.0;
  for (double R : {1e2, 1e4, 1e6}) {
    const double raw = asymptotic_angle_numeric(orb, R, false);
    CHECK(raw < want);
    CHECK(raw > prev);
    CHECK_THAT(asymptotic_angle_numeric(orb, R), WithinAbs(want, 1e-3));
    prev = raw;
  }

  // orbit ends point along the tail-corrected asymptotic directions
  const double gap = std::acos(std::clamp(orb.u_plus.dot(orb.u_minus), -1.0, 1.0));
  // 2pi sweep means the directions coincide
  CHECK_THAT(gap, WithinAbs(0.0, 1e-3));

  CHECK_THROWS_AS(asymptotic_angle_numeric(orb, 1e9), OrbitTooShort);
  CHECK_THROWS_AS(asymptotic_angle_numeric(orb, 0.5), InvalidArgument);
}

TEST_CASE("transverse count on the reference problem", "[limit]") {
  const auto rep = transverse_index(1.0, 0.0, 200.0, 4000);
  CHECK(rep.transverse_count == 1);
  CHECK(rep.i_alpha == 1);
  CHECK(rep.i_alpha_lambda == 1);
  CHECK(rep.mesh == 4000);
  CHECK(rep.truncation_L == 200.0);
}

TEST_CASE("transverse count dominates the winding index", "[limit]") {
  // Negative eigenfunctions spread out as the angular coupling approaches the
  // critical strength, so each point needs a window wide enough to hold every
  // sign change of the slowest mode.  The pairs below are stable: doubling the
  // window does not change the count.
  struct Point {
    double alpha, lambda, L;
    int mesh;
    int expected;
  };
  const Point pts[] = {
      {1.0, 0.0, 200.0, 4000, 1},  {1.0, 1.0, 200.0, 4000, 2},
      {1.0, 3.0, 200.0, 4000, 3},  {0.7, 3.0, 1000.0, 20000, 3},
      {1.5, 0.0, 400.0, 8000, 3},
  };
  for (const auto& p : pts) {
    const auto rep = transverse_index(p.alpha, p.lambda, p.L, p.mesh);
    INFO("alpha " << p.alpha << " lambda " << p.lambda << " L " << p.L);
    CHECK(rep.transverse_count == p.expected);
    CHECK(rep.transverse_count >= rep.i_alpha_lambda);
    CHECK(rep.i_alpha_lambda >= rep.i_alpha);
  }
}

TEST_CASE("transverse count is monotone in lambda and mass independent", "[limit]") {
  const int c0 = transverse_index(1.0, 0.0, 200.0, 4000).transverse_count;
  const int c1 = transverse_index(1.0, 1.0, 200.0, 4000).transverse_count;
  const int c3 = transverse_index(1.0, 3.0, 200.0, 4000).transverse_count;
  CHECK(c0 <= c1);
  CHECK(c1 <= c3);

  const auto m1 = transverse_index(1.0, 1.0, 150.0, 3000, 1.0);
  const auto m2 = transverse_index(1.0, 1.0, 150.0, 3000, 2.7);
  CHECK(m1.transverse_count == m2.transverse_count);
}

TEST_CASE("tridiagonal count agrees with the dense eigensolver", "[limit]") {
  Eigen::VectorXd diag, off;
  detail::transverse_assemble(1.0, 0.5, 1.0, 30.0, 400, &diag, &off);
  const int fast = tridiagonal_negative_count(diag, off);

  Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(diag.size(), diag.size());
  for (Eigen::Index i = 0; i < diag.size(); ++i) {
    dense(i, i) = diag[i];
    if (i + 1 < diag.size()) {
      dense(i, i + 1) = off[i];
      dense(i + 1, i) = off[i];
    }
  }
  const auto rep = morse_index(dense, Eigen::MatrixXd::Identity(diag.size(), diag.size()));
  CHECK(fast == rep.num_negative);
  CHECK(fast == symmetric_inertia(dense).negative);
}

TEST_CASE("infinite-lambda transverse count grows with the window", "[limit]") {
  int prev = 0;
  for (double L : {50.0, 100.0, 200.0}) {
    const auto rep = transverse_index(1.0, kLambdaInfinity, L, static_cast<int>(20 * L));
    INFO("L " << L << " count " << rep.transverse_count);
    CHECK(rep.transverse_count > prev);
    CHECK(rep.i_alpha_lambda == -1);
    // constant transverse potential -2 on the circle makes the count explicit:
    // modes with (k pi / 2L)^2 < 2, up to discretization at the margin
    const int exact = static_cast<int>(std::floor(2.0 * L * std::sqrt(2.0) / M_PI));
    CHECK(rep.transverse_count <= exact);
    CHECK(rep.transverse_count >= exact - 2);
    prev = rep.transverse_count;
  }
}

TEST_CASE("limit action over a window", "[limit]") {
  const auto orb = integrate_limit_orbit(1.0, 0.0, 1.0, 10.0, 2);
  CHECK(limit_action_value(LimitKind::I, orb, 0.3, 0.3) == 0.0);

  // zero energy makes the parabola integrand 2/r, and ds = sqrt(2)(1+sigma^2) dsigma
  // collapses the window integral to 2 sqrt(2) (sigma(1) - sigma(-1))
  const double s1 = oracle::barker_parameter(1.0);
  const double s0 = oracle::barker_parameter(-1.0);
  const double want = 2.0 * std::sqrt(2.0) * (s1 - s0);
  CHECK_THAT(limit_action_value(LimitKind::I, orb, -1.0, 1.0), WithinRel(want, 1e-6));

  // the inverse-square-only integrand on the circular orbit is the constant 2
  const auto circ = integrate_limit_orbit(1.0, kLambdaInfinity, 1.0, 5.0, 2);
  const double jval = limit_action_value(LimitKind::J, circ, -2.0, 3.0);
  CHECK(jval > 0.0);
  CHECK_THAT(jval, WithinRel(2.0 * 5.0, 1e-9));

  CHECK_THROWS_AS(limit_action_value(LimitKind::I, orb, -20.0, 1.0), OrbitTooShort);
  CHECK_THROWS_AS(limit_action_value(LimitKind::I, circ, 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(limit_action_value(LimitKind::I, orb, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("truncation guard fires when the window is too small", "[limit]") {
  // at alpha = 1.9 the negative directions spread far beyond [-4, 4]
  CHECK_THROWS_AS(transverse_index(1.9, 0.0, 4.0, 200), TruncationTooSmall);
}

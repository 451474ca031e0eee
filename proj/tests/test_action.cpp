#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "morsenb/action.hpp"
#include "oracles.hpp"

using namespace morsenb;

namespace {

MassSystem pair_sys(double alpha = 1.0) {
  Eigen::VectorXd m = Eigen::VectorXd::Ones(2);
  return MassSystem(2, alpha, m);
}

// Circular two-body solution of the eps-regularized problem, equal unit
// masses, pair distance 1: omega^2 = 2 (alpha + 2 eps).
DiscretePath circular_orbit(double alpha, double eps, int m, double t2) {
  MassSystem sys(2, alpha, Eigen::VectorXd::Ones(2));
  const double omega = std::sqrt(2.0 * (alpha + 2.0 * eps));
  std::vector<Config> nodes(static_cast<size_t>(m));
  for (int k = 0; k < m; ++k) {
    const double t = t2 * k / (m - 1);
    Config q(2, 2);
    q << 0.5 * std::cos(omega * t), 0.5 * std::sin(omega * t),
        -0.5 * std::cos(omega * t), -0.5 * std::sin(omega * t);
    nodes[static_cast<size_t>(k)] = q;
  }
  return make_path_seeded(sys, nodes, 0.0, t2);
}

}  // namespace

TEST_CASE("kinetic term is exact for linear motion", "[action]") {
  Eigen::VectorXd m(2);
  m << 2.0, 1.0;
  MassSystem sys(2, 1.0, m);
  Config qa(2, 2), qb(2, 2);
  qa << 1.0, 0.0, -2.0, 0.0;
  qb << 1.0, 1.0, -2.0, -2.0;
  auto p = make_path_linear(sys, qa, qb, 0.0, 2.0, 17);
  const auto av = action_value(p, 0.0);
  // each body moves at constant speed |qb-qa|/T
  const double expect = 0.5 * (2.0 * 0.25 + 1.0 * 1.0) * 2.0;
  REQUIRE_THAT(av.kinetic, Catch::Matchers::WithinRel(expect, 1e-13));
  REQUIRE_THAT(av.total, Catch::Matchers::WithinRel(av.kinetic + av.weak_pot, 1e-13));
}

TEST_CASE("action converges at second order to a dense quadrature reference", "[action]") {
  // smooth analytic two-body trajectory, acted on by the true integral
  auto traj = [](double t) {
    Eigen::RowVector2d x(1.5 + 0.3 * std::sin(t), 0.8 * std::cos(t));
    return x;
  };
  auto sys = pair_sys(1.0);
  const double eps = 0.2;
  auto kinetic_density = [&](double t) {
    const double dh = 1e-6;
    const Eigen::RowVector2d v = (traj(t + dh) - traj(t - dh)) / (2.0 * dh);
    // both bodies at +-x/2 with unit mass: kinetic = |xdot|^2 / 4
    return 0.25 * v.squaredNorm();
  };
  auto pot_density = [&](double t) {
    const double r = traj(t).norm();
    return 1.0 / r + eps / (r * r);
  };
  const double t2 = 3.0;
  const double ref = oracle::simpson([&](double t) { return kinetic_density(t) + pot_density(t); }, 0.0, t2, 20000);
  auto discrete_action = [&](int m) {
    std::vector<Config> nodes(static_cast<size_t>(m));
    for (int k = 0; k < m; ++k) {
      const double t = t2 * k / (m - 1);
      Config q(2, 2);
      q.row(0) = 0.5 * traj(t);
      q.row(1) = -0.5 * traj(t);
      nodes[static_cast<size_t>(k)] = q;
    }
    return action_value(make_path_seeded(sys, nodes, 0.0, t2), eps).total;
  };
  const double e1 = std::abs(discrete_action(101) - ref);
  const double e2 = std::abs(discrete_action(201) - ref);
  REQUIRE(e1 / e2 > 3.0);
  REQUIRE(e1 / e2 < 5.0);
}

TEST_CASE("infinite action is an error", "[action]") {
  auto sys = pair_sys();
  // separation passes through zero at the midpoint of the second segment,
  // which is exactly where the quadrature samples the potential
  const double xs[] = {-2.0, -1.0, 1.0, 2.0, 3.0};
  std::vector<Config> nodes;
  for (double x : xs) {
    Config q(2, 2);
    q << -0.5 * x, 0.0, 0.5 * x, 0.0;
    nodes.push_back(q);
  }
  REQUIRE_THROWS_AS(action_value(make_path_seeded(sys, nodes, 0.0, 1.0), 0.1), InfiniteAction);
}

TEST_CASE("action gradient matches central differences in random directions", "[action]") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd m(3);
  m << 1.0, 2.0, 0.5;
  MassSystem sys(3, 1.2, m);
  Config qa = oracle::random_centered_config(rng, m, 3, 1.5, 0.8);
  Config qb = oracle::random_centered_config(rng, m, 3, 1.5, 0.8);
  ActionProblem prob(sys, qa, qb, 0.0, 1.5, 16, 0.05);
  Eigen::VectorXd y = prob.interior_from_path(
      make_path_linear(sys, qa, qb, 0.0, 1.5, 16));
  // nudge interior away from the straight line
  for (int i = 0; i < y.size(); ++i) y[i] += 0.05 * nd(rng);
  const Eigen::VectorXd g = prob.gradient(y);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd v(y.size());
    for (int i = 0; i < v.size(); ++i) v[i] = nd(rng);
    v.normalize();
    const double fd = oracle::fd_directional([&](const Eigen::VectorXd& x) { return prob.value(x); },
                                             y, v, 1e-5);
    REQUIRE_THAT(g.dot(v), Catch::Matchers::WithinRel(fd, 1e-6));
  }
}

TEST_CASE("action hessian matches differenced gradients and value curvature", "[action]") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto sys = pair_sys(0.8);
  Config qa(2, 2), qb(2, 2);
  qa << -0.8, 0.1, 0.8, -0.1;
  qb << -0.6, -0.4, 0.6, 0.4;
  ActionProblem prob(sys, qa, qb, 0.0, 1.0, 12, 0.1);
  Eigen::VectorXd y = prob.interior_from_path(make_path_linear(sys, qa, qb, 0.0, 1.0, 12));
  for (int i = 0; i < y.size(); ++i) y[i] += 0.03 * nd(rng);
  const Eigen::MatrixXd h = prob.hessian(y);
  REQUIRE((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-11 * h.cwiseAbs().maxCoeff());
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd u(y.size()), v(y.size());
    for (int i = 0; i < y.size(); ++i) {
      u[i] = nd(rng);
      v[i] = nd(rng);
    }
    u.normalize();
    v.normalize();
    const Eigen::VectorXd fdg = oracle::fd_directional_vec(
        [&](const Eigen::VectorXd& x) { return prob.gradient(x); }, y, v, 1e-5);
    REQUIRE_THAT(u.dot(h * v), Catch::Matchers::WithinRel(u.dot(fdg), 1e-6));
    // plain second difference of the value along v
    const double f0 = prob.value(y);
    const double fp = prob.value(y + 1e-4 * v), fm = prob.value(y - 1e-4 * v);
    const double d2 = (fp + fm - 2.0 * f0) / 1e-8;
    REQUIRE_THAT(v.dot(h * v), Catch::Matchers::WithinRel(d2, 1e-5));
  }
}

TEST_CASE("hessian is block tridiagonal", "[action]") {
  auto sys = pair_sys(1.0);
  Config qa(2, 2), qb(2, 2);
  qa << -1.0, 0.0, 1.0, 0.0;
  qb << -1.0, 0.3, 1.0, -0.3;
  ActionProblem prob(sys, qa, qb, 0.0, 1.0, 10, 0.0);
  const Eigen::VectorXd y = prob.interior_from_path(make_path_linear(sys, qa, qb, 0.0, 1.0, 10));
  const Eigen::MatrixXd h = prob.hessian(y);
  const int b = prob.block();
  for (int i = 0; i < prob.n_interior(); ++i)
    for (int j = 0; j < prob.n_interior(); ++j)
      if (std::abs(i - j) > 1)
        REQUIRE(h.block(i * b, j * b, b, b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gram matrix agrees with the h1 inner product", "[action]") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd m(3);
  m << 1.0, 0.5, 2.5;
  MassSystem sys(2, 1.0, m);
  Config qa = oracle::random_centered_config(rng, m, 2);
  Config qb = oracle::random_centered_config(rng, m, 2);
  ActionProblem prob(sys, qa, qb, 0.0, 2.0, 9, 0.0);
  auto grid = make_path_linear(sys, qa, qb, 0.0, 2.0, 9);
  // random variation, zero at the ends, built in both representations
  std::vector<Config> u(9, Config::Zero(3, 2));
  Eigen::VectorXd yu(prob.dim());
  const ReducedBasis& rb = prob.basis();
  for (int k = 1; k <= 7; ++k) {
    Eigen::VectorXd yk(rb.dim());
    for (int i = 0; i < yk.size(); ++i) yk[i] = nd(rng);
    u[static_cast<size_t>(k)] = rb.lift(yk);
    yu.segment((k - 1) * rb.dim(), rb.dim()) = yk;
  }
  REQUIRE_THAT(yu.dot(prob.gram() * yu), Catch::Matchers::WithinRel(h1_inner(grid, u, u), 1e-12));
}

TEST_CASE("circular orbit is near-critical with O(h^2) residual", "[action]") {
  const double alpha = 1.0, eps = 0.15;
  auto resid = [&](int m) {
    auto orbit = circular_orbit(alpha, eps, m, 2.0);
    auto prob = ActionProblem::from_path(orbit, eps);
    const Eigen::VectorXd y = prob.interior_from_path(orbit);
    return prob.residual_h1(prob.gradient(y));
  };
  const double r1 = resid(200), r2 = resid(400);
  REQUIRE(r1 < 1e-3);
  REQUIRE(r1 / r2 > 3.0);
  REQUIRE(r1 / r2 < 5.0);
}

TEST_CASE("reduced basis round trip and kinetic normalization", "[action]") {
  std::mt19937_64 rng(3);
  Eigen::VectorXd m(4);
  m << 1.0, 2.0, 3.0, 4.0;
  MassSystem sys(3, 1.0, m);
  ReducedBasis rb(sys);
  const Config q = oracle::random_centered_config(rng, m, 3);
  const Eigen::VectorXd y = rb.reduce(q);
  REQUIRE((rb.lift(y) - q).cwiseAbs().maxCoeff() < 1e-12);
  // mass-weighted norm of q equals the plain norm of y
  double qn = 0.0;
  for (int i = 0; i < 4; ++i) qn += m[i] * q.row(i).squaredNorm();
  REQUIRE_THAT(y.squaredNorm(), Catch::Matchers::WithinRel(qn, 1e-12));
}

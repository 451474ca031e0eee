// Acceptance gate. Ten numbered criteria, each with its tolerances pinned
// right here, each ending in exactly one verdict line of the form
//
//   criterion  N: PASS  <what was checked>
//   criterion  N: FAIL  <what was checked>
//
// Indented lines above a verdict are measurements backing it. The exit code
// is the number of failed criteria. With arguments, only the named criteria
// run (e.g. "acceptance 1 4 9").
//
// The shared two-body bounce run (criteria 6, 7, 9, 10) is built once: d = 3,
// alpha = 1, equal masses, collinear reflected endpoints, eps_n = 4^{-n} for
// n = 1..8 on a 256-node grid.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "morsenb/action.hpp"
#include "morsenb/collision.hpp"
#include "morsenb/continuation.hpp"
#include "morsenb/limit.hpp"
#include "morsenb/path.hpp"
#include "morsenb/potential.hpp"
#include "morsenb/system.hpp"
#include "oracles.hpp"

using namespace morsenb;

namespace {

constexpr unsigned kSeed = 20240816;

struct Flagship {
  WeakCriticalSequence seq;
  std::vector<CollisionEvent> events;  // default thresholds
};

const Flagship& flagship() {
  static const Flagship f = [] {
    const MassSystem sys(3, 1.0, Eigen::Vector2d(1.0, 1.0));
    Config qa(2, 3), qb(2, 3);
    qa.setZero();
    qa(0, 0) = -0.5;
    qa(1, 0) = 0.5;
    qb = -qa;
    const DiscretePath seed = make_bounce_seed(sys, qa, qb, 0.0, 1.0, 256);
    std::vector<double> schedule;
    for (int n = 1; n <= 8; ++n) schedule.push_back(std::pow(4.0, -n));
    ContinuationOptions opt;
    opt.tol = 1e-8;
    opt.solver = StageSolver::PlanarThenNewton;
    Flagship out;
    out.seq = continuation(seed, schedule, opt);
    out.events = detect_collisions(out.seq);
    return out;
  }();
  return f;
}

// Refined detection re-solves the first stages on a 32769-node grid, which
// pushes the measured delta_n below the coarse mesh floor and sharpens the
// lambda fit. Built once, used by criteria 7 and 10.
const std::vector<CollisionEvent>& refined_events() {
  static const std::vector<CollisionEvent> evs = [] {
    ThresholdRule rule;
    rule.refine = true;
    return detect_collisions(flagship().seq, rule);
  }();
  return evs;
}

DiscretePath random_wiggled_path(std::mt19937_64& rng, const MassSystem& sys, int m) {
  std::normal_distribution<double> nd(0.0, 1.0);
  const Config qa = oracle::random_centered_config(rng, sys.masses, sys.d, 1.0, 1.0);
  Config step(sys.n_bodies(), sys.d);
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int a = 0; a < sys.d; ++a) step(i, a) = 0.1 * nd(rng);
  Config qb = qa + step;
  qb.rowwise() -= (sys.masses.transpose() * qb) / sys.masses.sum();
  DiscretePath p = make_path_linear(sys, qa, qb, 0.0, 1.0, m);
  for (int k = 1; k + 1 < m; ++k) {
    Config& q = p.nodes[static_cast<size_t>(k)];
    for (int i = 0; i < sys.n_bodies(); ++i)
      for (int a = 0; a < sys.d; ++a) q(i, a) += 0.03 * nd(rng);
    q.rowwise() -= (sys.masses.transpose() * q) / sys.masses.sum();
  }
  p.validate();
  return p;
}

// 1. Reduced action gradient and Hessian against central differences on 100
//    random collision-free paths, N in {2,3,4}, d = 3, M = 64.
bool criterion_1() {
  const double tol = 1e-6, step = 1e-5;
  std::mt19937_64 rng(kSeed);
  double worst_g = 0.0, worst_h = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 3;
    const double eps = (trial % 2) ? 0.1 : 0.0;
    const MassSystem sys(3, 1.0, Eigen::VectorXd::LinSpaced(n, 1.0, 2.0));
    const DiscretePath p = random_wiggled_path(rng, sys, 64);
    ActionProblem prob = ActionProblem::from_path(p, eps);
    const Eigen::VectorXd y = prob.interior_from_path(p);
    const Eigen::VectorXd g = prob.gradient(y);
    const Eigen::MatrixXd hess = prob.hessian(y);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int rep = 0; rep < 3; ++rep) {
      Eigen::VectorXd v(y.size()), w(y.size());
      for (Eigen::Index k = 0; k < y.size(); ++k) {
        v[k] = nd(rng);
        w[k] = nd(rng);
      }
      v /= v.norm();
      w /= w.norm();
      const double fd_g = oracle::fd_directional(
          [&](const Eigen::VectorXd& z) { return prob.value(z); }, y, v, step);
      worst_g = std::max(worst_g, std::abs(fd_g - g.dot(v)) / std::max(1.0, std::abs(fd_g)));
      const Eigen::VectorXd fd_h = oracle::fd_directional_vec(
          [&](const Eigen::VectorXd& z) { return prob.gradient(z); }, y, v, step);
      worst_h = std::max(worst_h,
                         std::abs(w.dot(fd_h) - w.dot(hess * v)) / std::max(1.0, fd_h.norm()));
    }
  }
  std::printf("    gradient max rel error %.3e, hessian max rel error %.3e, tol %.0e\n", worst_g,
              worst_h, tol);
  return worst_g < tol && worst_h < tol;
}

// 2. Closed-form index values and the lambda = 0 reduction on an alpha grid.
bool criterion_2() {
  bool ok = index_i(1.0) == 1 && index_i(0.5) == 1 && index_i(1.5) == 3;
  std::printf("    i(1) = %d, i(0.5) = %d, i(1.5) = %d\n", index_i(1.0), index_i(0.5),
              index_i(1.5));
  const Eigen::VectorXd grid = Eigen::VectorXd::LinSpaced(20, 0.1, 1.9);
  for (int k = 0; k < grid.size(); ++k)
    if (index_i_lambda(grid[k], 0.0) != index_i(grid[k])) {
      std::printf("    i(alpha, 0) != i(alpha) at alpha = %.4f\n", grid[k]);
      ok = false;
    }
  return ok;
}

// 3. Swept asymptotic angle against 2 pi sqrt(1+lambda)/(2-alpha) at R = 1e6
//    with the analytic tail correction; the (1, 0) entry must equal 2 pi.
bool criterion_3() {
  const double tol = 1e-3, R = 1e6;
  bool ok = true;
  for (double a : {1.0, 1.5})
    for (double l : {0.0, 1.0, 3.0}) {
      const LimitOrbit orb = integrate_limit_orbit(a, l, 1.0, s_for_radius(a, 1.0, R), 2);
      const double num = asymptotic_angle_numeric(orb, R);
      const double th = asymptotic_angle_theory(a, l);
      const double err = std::abs(num - th);
      std::printf("    alpha=%.1f lambda=%g: numeric %.9f theory %.9f |diff| %.2e\n", a, l, num,
                  th, err);
      ok = ok && err <= tol;
      if (a == 1.0 && l == 0.0) ok = ok && std::abs(num - 2.0 * M_PI) <= tol;
    }
  return ok;
}

// 4. Parabolic Kepler oracle: the alpha = 1, lambda = 0, unit-mass orbit
//    matches the closed-form zero-energy parabola.
bool criterion_4() {
  const LimitOrbit orb = integrate_limit_orbit(1.0, 0.0, 1.0, 10.5, 2);
  double worst = 0.0;
  for (int k = 0; k <= 2000; ++k) {
    const double s = -10.0 + 20.0 * k / 2000.0;
    Eigen::VectorXd pos;
    orb.eval(s, &pos, nullptr);
    worst = std::max(worst, (pos.head<2>() - oracle::parabola_position(s)).norm());
  }
  std::printf("    max position error %.3e (tol 1e-6), energy residual %.3e (tol 1e-9)\n", worst,
              orb.energy_residual);
  return worst <= 1e-6 && orb.energy_residual <= 1e-9;
}

// 5. Transverse index bound at the pinned window L = 200, mesh = 4000 on the
//    criterion-3 grid; equality at (1, 0); strict count growth over the
//    truncation ladder for the infinite-lambda operator.
bool criterion_5() {
  bool ok = true;
  for (double a : {1.0, 1.5})
    for (double l : {0.0, 1.0, 3.0}) {
      const int c1 = detail::transverse_negative_count(a, l, 1.0, 200.0, 4000);
      const int c2 = detail::transverse_negative_count(a, l, 1.0, 400.0, 8000);
      const int want = index_i_lambda(a, l);
      const bool here = c1 >= want;
      std::printf("    alpha=%.1f lambda=%g: count %d (doubled window %d), i = %d%s\n", a, l, c1,
                  c2, want, here ? "" : "  BELOW BOUND");
      ok = ok && here;
      if (a == 1.0 && l == 0.0) ok = ok && c1 == 1;
    }
  // Wider-window attainment for the alpha = 1.5 entries: the slowest mode's
  // outermost sign changes ride a near-critical 1/s^2 tail, so the pinned
  // window undercounts even though the count is monotone in L and reaches
  // the bound eventually.
  struct Wide {
    double lambda, L;
  };
  for (const Wide w : {Wide{0.0, 400.0}, Wide{1.0, 1e5}, Wide{3.0, 1e5}}) {
    const int mesh = static_cast<int>(20 * w.L);
    const int c = detail::transverse_negative_count(1.5, w.lambda, 1.0, w.L, mesh);
    std::printf("    diagnostic: alpha=1.5 lambda=%g count %d at L=%g (i = %d)\n", w.lambda, c,
                w.L, index_i_lambda(1.5, w.lambda));
  }
  int prev = -1;
  for (double L : {50.0, 100.0, 200.0}) {
    const int c = detail::transverse_negative_count(1.0, kLambdaInfinity, 1.0, L,
                                                    static_cast<int>(20 * L));
    std::printf("    lambda=inf alpha=1.0: count %d at L=%g\n", c, L);
    ok = ok && c > prev;
    prev = c;
  }
  return ok;
}

// 6. Flagship continuation: convergence, bounded action, collapsing closest
//    approach, one isolated binary event, tail index at least
//    (d-2) i(alpha) B = 1, and the index bound report.
bool criterion_6() {
  const Flagship& f = flagship();
  bool ok = !f.seq.broke;
  double worst_res = 0.0, max_action = 0.0;
  for (const CriticalPointRecord& r : f.seq.records) {
    ok = ok && r.converged;
    worst_res = std::max(worst_res, r.residual_h1dual);
    max_action = std::max(max_action, r.action.total);
  }
  ok = ok && worst_res <= 1e-8 && max_action <= 100.0;
  const double d0 = f.seq.records.front().closest.delta;
  const double d8 = f.seq.records.back().closest.delta;
  ok = ok && d0 / d8 >= 5.0;
  std::printf(
      "    records %zu, worst residual %.2e, max action %.4f, delta %.4f -> %.4f (ratio %.2f)\n",
      f.seq.records.size(), worst_res, max_action, d0, d8, d0 / d8);
  const int B = count_binary_events(f.events);
  ok = ok && f.events.size() == 1 && B == 1 && f.events[0].isolated;
  std::printf("    events %zu, binary %d, isolated %s\n", f.events.size(), B,
              f.events.empty() ? "-" : (f.events[0].isolated ? "yes" : "no"));
  int tail_min = 1 << 30;
  const size_t tail = static_cast<size_t>(std::min<int>(f.seq.tail, static_cast<int>(f.seq.records.size())));
  for (size_t k = f.seq.records.size() - tail; k < f.seq.records.size(); ++k)
    tail_min = std::min(tail_min, f.seq.records[k].morse_index);
  const IndexBoundReport rep = verify_index_bound(f.seq, B);
  std::printf("    tail morse index min %d (need >= 1), bound %d <= %d %s\n", tail_min, rep.lhs,
              rep.rhs, rep.holds ? "holds" : "VIOLATED");
  ok = ok && tail_min >= 1 && rep.holds;
  return ok;
}

// 7. Collision direction regularity: the incoming and outgoing unit
//    directions of the flagship event should agree within 1e-2 rad. The
//    measured sequence settles on a finite lambda near 1.17, where the
//    near-collision arc sweeps 2 pi sqrt(1 + lambda) instead of 2 pi, so the
//    directions differ by that sweep modulo full turns; the measurement and
//    the geometric prediction are printed.
bool criterion_7() {
  const Flagship& f = flagship();
  if (f.events.empty()) {
    std::printf("    no event to measure\n");
    return false;
  }
  const CollisionEvent& ev = refined_events().empty() ? f.events[0] : refined_events()[0];
  DirectionOptions opt;
  opt.l_lo = 4.0;
  DirectionEstimate dm, dp;
  try {
    dm = collision_direction(f.seq, ev, CollisionSide::before, opt);
    dp = collision_direction(f.seq, ev, CollisionSide::after, opt);
  } catch (const Error& e) {
    std::printf("    direction estimate failed: %s\n", e.what());
    return false;
  }
  const double cosang = std::clamp(dm.u.dot(dp.u), -1.0, 1.0);
  const double angle = std::acos(cosang);
  std::printf("    lambda_fit %.6f, conic lambda (before) %.4f\n", ev.lambda_fit,
              dm.lambda_conic);
  std::printf("    u_minus spread %.2e, u_plus spread %.2e\n", dm.spread, dp.spread);
  std::printf("    angle(u_minus, u_plus) = %.6f rad (tol 1e-2)\n", angle);
  if (std::isfinite(ev.lambda_fit) && ev.lambda_fit > 0.0) {
    const double sweep = 2.0 * M_PI * std::sqrt(1.0 + ev.lambda_fit);
    const double folded = std::abs(std::remainder(sweep, 2.0 * M_PI));
    std::printf("    finite-lambda sweep 2 pi sqrt(1+lambda) = %.4f rad, folded %.4f rad\n",
                sweep, folded);
  }
  return angle <= 1e-2;
}

// 8. Fixed-ends minimizers stay collision-free: 20 random three-body runs at
//    eps = 0 must converge with positive closest approach and Morse index 0.
bool criterion_8() {
  std::mt19937_64 rng(kSeed + 8);
  const MassSystem sys(3, 1.0, Eigen::Vector3d(1.0, 1.0, 1.0));
  bool ok = true;
  double min_sep = 1e300, worst_res = 0.0;
  int worst_index = 0;
  for (int run = 0; run < 20; ++run) {
    const Config qa = oracle::random_centered_config(rng, sys.masses, 3, 1.0, 1.0);
    const Config qb = oracle::random_centered_config(rng, sys.masses, 3, 1.0, 1.0);
    const DiscretePath seed = make_path_linear(sys, qa, qb, 0.0, 1.0, 64);
    const CriticalPointRecord rec = minimize(seed, 0.0, 1e-8);
    ok = ok && rec.converged && rec.closest.delta > 0.0 && rec.morse_index == 0;
    min_sep = std::min(min_sep, rec.closest.delta);
    worst_res = std::max(worst_res, rec.residual_h1dual);
    worst_index = std::max(worst_index, rec.morse_index);
    if (!rec.converged) std::printf("    run %d did not converge\n", run);
  }
  std::printf("    20 runs: min closest approach %.4f, worst residual %.2e, max morse index %d\n",
              min_sep, worst_res, worst_index);
  return ok;
}

// 9. Generalized-solution audit of the flagship limit path: isolated events,
//    Euler-Lagrange residual off the collision windows, total energy drift,
//    and the cluster-energy jump across the window.
bool criterion_9() {
  const AuditOptions opt;  // tol_el 1e-4, tol_drift 1e-6, tol_jump 1e-3
  const GeneralizedSolutionAudit audit = audit_generalized_solution(flagship().seq, opt);
  std::printf("    events %d, isolated %s, el residual %.3e (tol %.0e)\n", audit.n_events,
              audit.finite_collision_set ? "yes" : "no", audit.el_residual_max, opt.tol_el);
  std::printf("    energy drift %.3e (tol %.0e), cluster jump %.3e (tol %.0e)\n",
              audit.energy_drift, opt.tol_drift, audit.max_energy_jump, opt.tol_jump);
  std::printf("    window radius %.4f, excluded %d of %d nodes\n", audit.r_window,
              audit.excluded_nodes, audit.total_nodes);
  return audit.all_pass();
}

// 10. Rescaled second-variation convergence: with the refined lambda fit and
//     a fixed quartic bump, the per-stage rescaled form approaches the limit
//     form with a decreasing tail within 5%.
bool criterion_10() {
  if (refined_events().empty()) {
    std::printf("    no refined event\n");
    return false;
  }
  const CollisionEvent& ev = refined_events()[0];
  if (!std::isfinite(ev.lambda_fit)) {
    std::printf("    lambda fit is not finite\n");
    return false;
  }
  const RescaledFormReport rep =
      restricted_quadform_convergence(flagship().seq, ev, transverse_bump(6.0));
  std::printf("    lambda used %.6f, limit form %.6f\n", rep.lambda_used, rep.limit_form);
  for (size_t k = 0; k < rep.values.size(); ++k)
    std::printf("    n=%d value %.5f rel diff %.4f\n", rep.n_used[k], rep.values[k],
                rep.rel_diff[k]);
  const bool ok = !rep.rel_diff.empty() && rep.rel_diff.back() <= 0.05 && rep.tail_decreasing;
  std::printf("    tail decreasing %s, final rel diff %.4f (tol 0.05)\n",
              rep.tail_decreasing ? "yes" : "no",
              rep.rel_diff.empty() ? -1.0 : rep.rel_diff.back());
  return ok;
}

struct Criterion {
  int id;
  const char* what;
  std::function<bool()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "action gradient and hessian match central differences (rel < 1e-6)", criterion_1},
      {2, "closed-form index values and the lambda = 0 reduction", criterion_2},
      {3, "asymptotic angle matches 2 pi sqrt(1+lambda)/(2-alpha) within 1e-3", criterion_3},
      {4, "limit orbit reproduces the zero-energy Kepler parabola", criterion_4},
      {5, "transverse count attains the index bound at the pinned window", criterion_5},
      {6, "flagship bounce continuation: convergence, collapse, index bound", criterion_6},
      {7, "incoming and outgoing collision directions agree within 1e-2 rad", criterion_7},
      {8, "random fixed-ends minimizers are collision-free with index 0", criterion_8},
      {9, "flagship limit path passes the generalized-solution audit", criterion_9},
      {10, "rescaled second variation converges to the limit form within 5%", criterion_10},
  };

  std::set<int> wanted;
  for (int k = 1; k < argc; ++k) wanted.insert(std::atoi(argv[k]));

  int failed = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    bool ok = false;
    try {
      ok = c.run();
    } catch (const std::exception& e) {
      std::printf("    unexpected error: %s\n", e.what());
    }
    std::printf("criterion %2d: %s  %s\n", c.id, ok ? "PASS" : "FAIL", c.what);
    if (!ok) ++failed;
  }
  if (failed)
    std::printf("acceptance: %d criterion(s) failed\n", failed);
  else
    std::printf("acceptance: all criteria passed\n");
  return failed;
}

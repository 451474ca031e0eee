#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "morsenb/action.hpp"
#include "morsenb/limit.hpp"
#include "morsenb/path.hpp"
#include "morsenb/solve.hpp"
#include "morsenb/spectral.hpp"

namespace morsenb {

// One converged (or honestly flagged) critical point of A^eps on a fixed
// grid, together with everything the continuation bookkeeping needs: action
// split, h1-dual residual, spectral data, and the separation record of every
// body pair.
struct CriticalPointRecord {
  DiscretePath path;
  double eps = 0.0;
  ActionValue action;
  double residual_h1dual = 0.0;
  int morse_index = 0;
  std::vector<double> negative_eigenvalues;
  bool converged = false;
  int iterations = 0;
  std::vector<SeparationEvent> pair_separations;  // all pairs, (i,j) lexicographic
  SeparationEvent closest;
};

inline void to_json(nlohmann::json& j, const CriticalPointRecord& r) {
  j = nlohmann::json{{"eps", r.eps},
                     {"action", r.action},
                     {"residual_h1dual", r.residual_h1dual},
                     {"morse_index", r.morse_index},
                     {"negative_eigenvalues", r.negative_eigenvalues},
                     {"converged", r.converged},
                     {"iterations", r.iterations},
                     {"pair_separations", r.pair_separations},
                     {"closest", r.closest},
                     {"path", r.path}};
}

inline void from_json(const nlohmann::json& j, CriticalPointRecord& r) {
  r.eps = j.at("eps").get<double>();
  r.action = j.at("action").get<ActionValue>();
  r.residual_h1dual = j.at("residual_h1dual").get<double>();
  r.morse_index = j.at("morse_index").get<int>();
  r.negative_eigenvalues = j.at("negative_eigenvalues").get<std::vector<double>>();
  r.converged = j.at("converged").get<bool>();
  r.iterations = j.at("iterations").get<int>();
  r.pair_separations = j.at("pair_separations").get<std::vector<SeparationEvent>>();
  r.closest = j.at("closest").get<SeparationEvent>();
  r.path = j.at("path").get<DiscretePath>();
  if (r.morse_index != static_cast<int>(r.negative_eigenvalues.size()))
    throw ParseError("CriticalPointRecord: morse_index does not match the eigenvalue list");
}

// Assemble a record from a solver result. The Morse index and the negative
// eigenvalues come from the dense generalized solve against the H1 Gram.
inline CriticalPointRecord make_record(const ActionProblem& prob, const SolveResult& sr,
                                       bool compute_spectrum = true) {
  CriticalPointRecord rec;
  rec.path = prob.path_from_interior(sr.y);
  rec.eps = prob.eps();
  rec.action = prob.parts(sr.y);
  rec.residual_h1dual = sr.residual;
  rec.converged = sr.converged;
  rec.iterations = sr.iterations;
  rec.pair_separations = all_pair_separations(rec.path);
  for (const SeparationEvent& ev : rec.pair_separations) {
    const bool better = ev.delta < rec.closest.delta ||
                        (ev.delta == rec.closest.delta && ev.t_star < rec.closest.t_star);
    if (better) rec.closest = ev;
  }
  if (compute_spectrum) {
    const SpectralReport rep = morse_index(prob.hessian(sr.y), prob.gram());
    rec.morse_index = rep.num_negative;
    rec.negative_eigenvalues.assign(rep.eigenvalues.data(),
                                    rep.eigenvalues.data() + rep.num_negative);
  }
  return rec;
}

// Record-level minimize: descend A^eps from a seed path with fixed endpoints.
inline CriticalPointRecord minimize(const DiscretePath& start, double eps, double tol,
                                    MinimizeOptions opt = {}) {
  if (!(eps >= 0.0)) throw InvalidArgument("minimize: eps must be >= 0");
  if (!(tol > 0.0)) throw InvalidArgument("minimize: tol must be positive");
  ActionProblem prob = ActionProblem::from_path(start, eps);
  opt.tol = tol;
  const SolveResult sr = minimize(prob, prob.interior_from_path(start), opt);
  return make_record(prob, sr);
}

// Record-level Newton refinement: converges to critical points of any index.
inline CriticalPointRecord newton_refine(const DiscretePath& start, double eps, double tol,
                                         NewtonOptions opt = {}) {
  if (!(eps >= 0.0)) throw InvalidArgument("newton_refine: eps must be >= 0");
  if (!(tol > 0.0)) throw InvalidArgument("newton_refine: tol must be positive");
  ActionProblem prob = ActionProblem::from_path(start, eps);
  opt.tol = tol;
  const SolveResult sr = newton_refine(prob, prob.interior_from_path(start), opt);
  return make_record(prob, sr);
}

// Record-level mountain pass between two critical points sharing a grid,
// endpoints and eps.
inline CriticalPointRecord mountain_pass(const CriticalPointRecord& a,
                                         const CriticalPointRecord& b, double tol,
                                         MountainPassOptions opt = {}) {
  if (!(tol > 0.0)) throw InvalidArgument("mountain_pass: tol must be positive");
  if (a.eps != b.eps) throw InvalidArgument("mountain_pass: records have different eps");
  if (!(a.path.system == b.path.system) || a.path.m_nodes() != b.path.m_nodes() ||
      a.path.t1 != b.path.t1 || a.path.t2 != b.path.t2)
    throw InvalidArgument("mountain_pass: records live on different grids");
  const double scale = std::max(1.0, a.path.nodes.front().norm());
  if ((a.path.nodes.front() - b.path.nodes.front()).norm() > 1e-9 * scale ||
      (a.path.nodes.back() - b.path.nodes.back()).norm() > 1e-9 * scale)
    throw InvalidArgument("mountain_pass: records have different endpoints");
  ActionProblem prob = ActionProblem::from_path(a.path, a.eps);
  opt.tol = tol;
  const MountainPassResult mp = mountain_pass(prob, prob.interior_from_path(a.path),
                                              prob.interior_from_path(b.path), opt);
  return make_record(prob, mp.saddle);
}

// Fitted behavior of eps_n / delta_n^{2-alpha} for one collapsing pair. The
// slope of log eps against log delta over the tail decides the class: about
// 2-alpha means the ratio settles (finite lambda), steeper means the ratio
// dies (lambda = 0), shallower means it blows up (lambda = infinity). The
// lambda field always holds the tail geometric mean of the ratio; the flags
// carry the classification.
struct LambdaEstimate {
  int body_i = -1, body_j = -1;
  std::vector<double> ratios;  // eps_n / delta_n^{2-alpha}, one per record
  double slope = 0.0;          // d(log eps) / d(log delta) over the tail
  double lambda = 0.0;
  bool vanishing = false;
  bool diverged = false;
};

inline void to_json(nlohmann::json& j, const LambdaEstimate& e) {
  j = nlohmann::json{{"body_i", e.body_i}, {"body_j", e.body_j}, {"ratios", e.ratios},
                     {"slope", e.slope},   {"lambda", e.lambda}, {"vanishing", e.vanishing},
                     {"diverged", e.diverged}};
}

inline void from_json(const nlohmann::json& j, LambdaEstimate& e) {
  e.body_i = j.at("body_i").get<int>();
  e.body_j = j.at("body_j").get<int>();
  e.ratios = j.at("ratios").get<std::vector<double>>();
  e.slope = j.at("slope").get<double>();
  e.lambda = j.at("lambda").get<double>();
  e.vanishing = j.at("vanishing").get<bool>();
  e.diverged = j.at("diverged").get<bool>();
}

// The computed stand-in for a weak critical point: an eps_n schedule, the
// records it produced, and the limit diagnostics. The index is the liminf
// along THIS sequence, an upper bound for the definition's infimum over all
// sequences; reports must label it that way.
struct WeakCriticalSequence {
  std::vector<double> eps_schedule;
  std::vector<CriticalPointRecord> records;
  DiscretePath limit_path;  // last record's path
  double action_bound = 0.0;
  bool bound_supplied = false;
  std::vector<LambdaEstimate> lambda_estimates;
  int index_liminf = 0;
  int tail = 0;                      // records covered by the tail statistics
  std::vector<double> supnorm_gaps;  // sup-norm distance between consecutive records
  bool supnorm_tail_decreasing = false;
  bool broke = false;
  std::string break_reason;
};

// Summary only: per-record scalars, not the full paths. Records themselves
// serialize individually (one JSON per record).
inline void to_json(nlohmann::json& j, const WeakCriticalSequence& s) {
  nlohmann::json recs = nlohmann::json::array();
  for (size_t n = 0; n < s.records.size(); ++n) {
    const CriticalPointRecord& r = s.records[n];
    recs.push_back(nlohmann::json{{"n", n + 1},
                                  {"eps", r.eps},
                                  {"action_total", r.action.total},
                                  {"residual_h1dual", r.residual_h1dual},
                                  {"morse_index", r.morse_index},
                                  {"delta", r.closest.delta},
                                  {"t_star", r.closest.t_star},
                                  {"converged", r.converged}});
  }
  j = nlohmann::json{{"eps_schedule", s.eps_schedule},
                     {"records", std::move(recs)},
                     {"limit_path", s.limit_path},
                     {"action_bound", s.action_bound},
                     {"bound_supplied", s.bound_supplied},
                     {"lambda_estimates", s.lambda_estimates},
                     {"index_liminf", s.index_liminf},
                     {"index_label", "sequence index (upper bound of weak index)"},
                     {"tail", s.tail},
                     {"supnorm_gaps", s.supnorm_gaps},
                     {"supnorm_tail_decreasing", s.supnorm_tail_decreasing},
                     {"broke", s.broke},
                     {"break_reason", s.break_reason}};
}

enum class StageSolver {
  DescentThenNewton,  // minimize, fall back to Newton from the best iterate
  NewtonOnly,         // damped Newton from the warm start (saddle tracking)
  PlanarThenNewton,   // minimize in a fixed 2-plane, lift, Newton in full dim
};

struct ContinuationOptions {
  double tol = 1e-8;
  double eps_floor = 1e-8;
  double action_bound = std::numeric_limits<double>::infinity();  // explicit C
  int tail = 4;  // records in the lambda fit / index liminf window
  StageSolver solver = StageSolver::DescentThenNewton;
  Eigen::MatrixXd plane;  // d x 2 working plane; derived from the seed when empty
  int descent_max_iter = 5000;
  bool compute_spectra = true;
  bool throw_on_break = false;
};

namespace detail {

inline double supnorm_gap(const DiscretePath& a, const DiscretePath& b) {
  double gap = 0.0;
  for (int k = 0; k < a.m_nodes(); ++k) {
    const Config& qa = a.nodes[static_cast<size_t>(k)];
    const Config& qb = b.nodes[static_cast<size_t>(k)];
    for (int i = 0; i < a.system.n_bodies(); ++i)
      gap = std::max(gap, (qa.row(i) - qb.row(i)).norm());
  }
  return gap;
}

// Best-fit 2-plane through every body position of every node, by SVD.
inline Eigen::MatrixXd fit_plane(const DiscretePath& p) {
  const int n = p.system.n_bodies();
  Eigen::MatrixXd stack(static_cast<Eigen::Index>(p.m_nodes()) * n, p.system.d);
  for (int k = 0; k < p.m_nodes(); ++k)
    stack.middleRows(static_cast<Eigen::Index>(k) * n, n) = p.nodes[static_cast<size_t>(k)];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(stack, Eigen::ComputeThinV);
  return svd.matrixV().leftCols(2);
}

// Orthonormalize a d x 2 plane candidate in place.
inline Eigen::MatrixXd orthonormal_plane(Eigen::MatrixXd plane, int d) {
  if (plane.rows() != d || plane.cols() != 2)
    throw InvalidArgument("continuation: plane must be d x 2");
  const double n0 = plane.col(0).norm();
  if (!(n0 > 0.0)) throw InvalidArgument("continuation: plane columns must be independent");
  plane.col(0) /= n0;
  plane.col(1) -= plane.col(0).dot(plane.col(1)) * plane.col(0);
  const double n1 = plane.col(1).norm();
  if (!(n1 > 1e-12)) throw InvalidArgument("continuation: plane columns must be independent");
  plane.col(1) /= n1;
  return plane;
}

inline DiscretePath project_to_plane(const DiscretePath& p, const Eigen::MatrixXd& plane) {
  MassSystem sys2(2, p.system.alpha, p.system.masses);
  std::vector<Config> nodes(p.nodes.size());
  for (size_t k = 0; k < p.nodes.size(); ++k) nodes[k] = p.nodes[k] * plane;
  return make_path_seeded(sys2, std::move(nodes), p.t1, p.t2);
}

inline std::vector<Config> lift_from_plane(const std::vector<Config>& nodes2,
                                           const Eigen::MatrixXd& plane) {
  std::vector<Config> out(nodes2.size());
  for (size_t k = 0; k < nodes2.size(); ++k) out[k] = nodes2[k] * plane.transpose();
  return out;
}

// Total polar sweep of the two-body relative vector of a planar (d = 2)
// path, from wrapped per-segment angle increments. Zero for other body
// counts; used to tell winding classes apart.
inline double relative_sweep(const DiscretePath& p2) {
  if (p2.system.n_bodies() != 2 || p2.system.d != 2) return 0.0;
  double sweep = 0.0;
  double prev = 0.0;
  for (int k = 0; k < p2.m_nodes(); ++k) {
    const Config& q = p2.nodes[static_cast<size_t>(k)];
    const double th = std::atan2(q(1, 1) - q(0, 1), q(1, 0) - q(0, 0));
    if (k > 0) {
      double dth = th - prev;
      while (dth > M_PI) dth -= 2.0 * M_PI;
      while (dth < -M_PI) dth += 2.0 * M_PI;
      sweep += dth;
    }
    prev = th;
  }
  return sweep;
}

}  // namespace detail

// Run the eps_n -> 0 continuation from a seed path: each stage is solved
// warm-started from the previous record, records are immutable once emitted,
// and the sequence carries the lambda fits, the sup-norm Cauchy proxy and the
// tail index liminf. A failed stage either flags the partial sequence
// (default) or throws ContinuationBroke.
inline WeakCriticalSequence continuation(const DiscretePath& seed,
                                         const std::vector<double>& eps_schedule,
                                         const ContinuationOptions& opt = {}) {
  seed.validate();
  if (eps_schedule.empty()) throw InvalidArgument("continuation: empty eps schedule");
  if (!(opt.tol > 0.0)) throw InvalidArgument("continuation: tol must be positive");
  if (opt.tail < 1) throw InvalidArgument("continuation: tail must be >= 1");
  for (size_t n = 0; n < eps_schedule.size(); ++n) {
    const double e = eps_schedule[n];
    if (!(e > 0.0) || !std::isfinite(e))
      throw InvalidArgument("continuation: eps values must be positive and finite");
    if (e < opt.eps_floor)
      throw EpsilonBelowFloor("continuation: eps " + std::to_string(e) +
                              " is below the floor " + std::to_string(opt.eps_floor));
    if (n > 0 && !(e < eps_schedule[n - 1]))
      throw InvalidArgument("continuation: eps schedule must be strictly decreasing");
  }

  WeakCriticalSequence seq;
  seq.eps_schedule = eps_schedule;
  seq.bound_supplied = std::isfinite(opt.action_bound);
  seq.limit_path = seed;

  ActionProblem prob = ActionProblem::from_path(seed, eps_schedule.front());

  Eigen::MatrixXd plane;
  if (opt.solver == StageSolver::PlanarThenNewton) {
    plane = opt.plane.size() ? detail::orthonormal_plane(opt.plane, seed.system.d)
                             : detail::fit_plane(seed);
    const double scale = std::max(1.0, seed.nodes.front().norm());
    const auto off_plane = [&](const Config& q) {
      return (q - q * plane * plane.transpose()).norm();
    };
    if (off_plane(seed.nodes.front()) > 1e-9 * scale ||
        off_plane(seed.nodes.back()) > 1e-9 * scale)
      throw InvalidArgument("continuation: endpoints leave the working plane");
  }

  DiscretePath current = seed;
  for (const double eps : eps_schedule) {
    prob.set_eps(eps);
    SolveResult sr;
    std::string reason;
    try {
      switch (opt.solver) {
        case StageSolver::DescentThenNewton: {
          MinimizeOptions mo;
          mo.tol = opt.tol;
          mo.max_iter = opt.descent_max_iter;
          sr = minimize(prob, prob.interior_from_path(current), mo);
          if (!sr.converged) {
            NewtonOptions no;
            no.tol = opt.tol;
            const SolveResult nr = newton_refine(prob, sr.y, no);
            if (nr.converged) sr = nr;
          }
          break;
        }
        case StageSolver::NewtonOnly: {
          NewtonOptions no;
          no.tol = opt.tol;
          sr = newton_refine(prob, prob.interior_from_path(current), no);
          break;
        }
        case StageSolver::PlanarThenNewton: {
          const DiscretePath cur2 = detail::project_to_plane(current, plane);
          ActionProblem prob2 = ActionProblem::from_path(cur2, eps);
          const double warm_sweep = detail::relative_sweep(cur2);
          const Eigen::VectorXd y0 = prob2.interior_from_path(cur2);
          const auto in_class = [&](const SolveResult& s) {
            if (!s.converged) return false;
            const double sw = detail::relative_sweep(prob2.path_from_interior(s.y));
            return std::abs(sw - warm_sweep) < M_PI;
          };
          SolveResult sr2;
          // a warm start from the previous record is near-critical, so Newton
          // tracks the same critical point through the eps step
          if (!seq.records.empty()) {
            NewtonOptions no2;
            no2.tol = opt.tol;
            const SolveResult cand = newton_refine(prob2, y0, no2);
            if (in_class(cand)) sr2 = cand;
          }
          if (!sr2.converged) {
            // descent with capped steps: the cap keeps the iterates from
            // hopping the collision barrier and unwinding the class
            MinimizeOptions mo;
            mo.tol = opt.tol;
            mo.max_iter = opt.descent_max_iter;
            double cap =
                0.25 * std::sqrt(2.0 / prob2.h()) * min_pair_separation(cur2).delta;
            for (int attempt = 0; attempt < 2 && !sr2.converged; ++attempt, cap *= 0.5) {
              mo.max_step = cap;
              SolveResult cand = minimize(prob2, y0, mo);
              if (!cand.converged) {
                NewtonOptions no2;
                no2.tol = opt.tol;
                SolveResult nr2 = newton_refine(prob2, cand.y, no2);
                if (nr2.converged) {
                  nr2.iterations += cand.iterations;
                  cand = nr2;
                }
              }
              if (in_class(cand)) sr2 = cand;
            }
          }
          if (!sr2.converged) {
            reason = "planar stage left the winding class or stalled at eps " +
                     std::to_string(eps);
            break;
          }
          const DiscretePath lifted = make_path_seeded(
              seed.system,
              detail::lift_from_plane(prob2.path_from_interior(sr2.y).nodes, plane),
              seed.t1, seed.t2);
          NewtonOptions no;
          no.tol = opt.tol;
          sr = newton_refine(prob, prob.interior_from_path(lifted), no);
          sr.iterations += sr2.iterations;
          break;
        }
      }
    } catch (const Error& e) {
      reason = e.what();
      sr.converged = false;
    }
    if (!sr.converged || sr.y.size() == 0) {
      seq.broke = true;
      seq.break_reason = reason.empty()
                             ? "stage at eps " + std::to_string(eps) + " did not reach tol"
                             : reason;
      if (opt.throw_on_break) throw ContinuationBroke("continuation: " + seq.break_reason);
      break;
    }
    CriticalPointRecord rec = make_record(prob, sr, opt.compute_spectra);
    if (seq.bound_supplied && rec.action.total > opt.action_bound)
      throw BoundViolated("continuation: action " + std::to_string(rec.action.total) +
                          " exceeds the bound " + std::to_string(opt.action_bound) +
                          " at eps " + std::to_string(eps));
    current = rec.path;
    seq.records.push_back(std::move(rec));
  }

  // tail statistics over what actually converged
  const auto count = seq.records.size();
  if (count > 0) seq.limit_path = seq.records.back().path;
  seq.tail = static_cast<int>(std::min<size_t>(static_cast<size_t>(opt.tail), count));
  if (!seq.bound_supplied) {
    seq.action_bound = 0.0;
    for (const auto& r : seq.records) seq.action_bound = std::max(seq.action_bound, r.action.total);
  } else {
    seq.action_bound = opt.action_bound;
  }
  seq.supnorm_gaps.reserve(count > 0 ? count - 1 : 0);
  for (size_t n = 1; n < count; ++n)
    seq.supnorm_gaps.push_back(
        detail::supnorm_gap(seq.records[n - 1].path, seq.records[n].path));
  if (!seq.supnorm_gaps.empty()) {
    const size_t gtail = std::min<size_t>(static_cast<size_t>(seq.tail), seq.supnorm_gaps.size());
    seq.supnorm_tail_decreasing = true;
    for (size_t k = seq.supnorm_gaps.size() - gtail + 1; k < seq.supnorm_gaps.size(); ++k)
      if (!(seq.supnorm_gaps[k] <= seq.supnorm_gaps[k - 1])) seq.supnorm_tail_decreasing = false;
  }
  if (count > 0) {
    seq.index_liminf = std::numeric_limits<int>::max();
    for (size_t n = count - static_cast<size_t>(seq.tail); n < count; ++n)
      seq.index_liminf = std::min(seq.index_liminf, seq.records[n].morse_index);
  }

  // lambda fits for pairs whose separation actually collapses
  if (count >= 2) {
    const double alpha = seed.system.alpha;
    const size_t pairs = seq.records.front().pair_separations.size();
    for (size_t p = 0; p < pairs; ++p) {
      std::vector<double> deltas(count);
      for (size_t n = 0; n < count; ++n)
        deltas[n] = seq.records[n].pair_separations[p].delta;
      if (!(deltas.back() <= 0.5 * deltas.front())) continue;
      LambdaEstimate est;
      est.body_i = seq.records.front().pair_separations[p].body_i;
      est.body_j = seq.records.front().pair_separations[p].body_j;
      est.ratios.resize(count);
      for (size_t n = 0; n < count; ++n)
        est.ratios[n] = seq.records[n].eps / std::pow(deltas[n], 2.0 - alpha);
      const size_t k = std::min<size_t>(static_cast<size_t>(seq.tail), count);
      double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, slr = 0.0;
      for (size_t n = count - k; n < count; ++n) {
        const double x = std::log(deltas[n]);
        const double y = std::log(seq.records[n].eps);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        slr += std::log(est.ratios[n]);
      }
      const double denom = k * sxx - sx * sx;
      est.slope = denom != 0.0 ? (k * sxy - sx * sy) / denom : 0.0;
      est.lambda = std::exp(slr / static_cast<double>(k));
      const double rel = est.slope / (2.0 - alpha);
      est.vanishing = rel > 1.15;
      est.diverged = rel < 0.85;
      seq.lambda_estimates.push_back(std::move(est));
    }
  }
  return seq;
}

struct IndexBoundReport {
  int binary_collisions = 0;  // the paper's B
  int lhs = 0;                // (d-2) * i(alpha) * B
  int rhs = 0;                // index liminf along the sequence
  bool holds = false;
};

inline void to_json(nlohmann::json& j, const IndexBoundReport& r) {
  j = nlohmann::json{{"binary_collisions", r.binary_collisions}, {"lhs", r.lhs},
                     {"rhs", r.rhs},                             {"holds", r.holds}};
}

// Instantiate (d-2) * i(alpha) * B <= liminf index with the sequence's
// computed quantities. The collision count comes from the caller (the
// collision detector, or an assumed count in tests).
inline IndexBoundReport verify_index_bound(const WeakCriticalSequence& seq,
                                           int binary_collisions) {
  if (seq.records.empty())
    throw InvalidArgument("verify_index_bound: sequence has no records");
  if (binary_collisions < 0)
    throw InvalidArgument("verify_index_bound: collision count must be >= 0");
  const MassSystem& sys = seq.limit_path.system;
  IndexBoundReport rep;
  rep.binary_collisions = binary_collisions;
  rep.lhs = (sys.d - 2) * index_i(sys.alpha) * binary_collisions;
  rep.rhs = seq.index_liminf;
  rep.holds = rep.lhs <= rep.rhs;
  return rep;
}

struct BounceSeedOptions {
  int half_turns = 3;        // total polar sweep of the relative vector, in pi units
  double dip = 0.15;         // seed closest approach relative to the endpoint radii
  unsigned rng_seed = 2024;  // fixes the bounce plane when the endpoints are collinear
  Eigen::MatrixXd plane;     // d x 2 override; must contain both endpoints
};

// Two-body winding seed: the relative vector sweeps half_turns * pi inside a
// fixed plane while its radius dips toward the origin mid-path. Descent from
// this seed stays inside the winding class (the strong-force barrier blocks
// the origin), which is what makes the bounce reachable as a planar
// minimizer.
inline DiscretePath make_bounce_seed(const MassSystem& sys, const Config& qa, const Config& qb,
                                     double t1, double t2, int m,
                                     const BounceSeedOptions& opt = {}) {
  sys.validate();
  if (sys.n_bodies() != 2) throw InvalidArgument("make_bounce_seed: exactly two bodies");
  sys.check_config(qa, "make_bounce_seed endpoint a");
  sys.check_config(qb, "make_bounce_seed endpoint b");
  if (m < 3) throw InvalidArgument("make_bounce_seed: need M >= 3");
  if (!(t2 > t1)) throw InvalidArgument("make_bounce_seed: need t2 > t1");
  if (opt.half_turns < 1) throw InvalidArgument("make_bounce_seed: need half_turns >= 1");
  if (!(opt.dip > 0.0 && opt.dip < 1.0))
    throw InvalidArgument("make_bounce_seed: dip must lie in (0,1)");

  const Eigen::VectorXd xa = (qa.row(1) - qa.row(0)).transpose();
  const Eigen::VectorXd xb = (qb.row(1) - qb.row(0)).transpose();
  const double ra = xa.norm(), rb = xb.norm();
  if (!(ra > 0.0 && rb > 0.0))
    throw InvalidArgument("make_bounce_seed: endpoint configurations are collisions");

  Eigen::VectorXd p1, p2;
  if (opt.plane.size()) {
    const Eigen::MatrixXd plane = detail::orthonormal_plane(opt.plane, sys.d);
    p1 = plane.col(0);
    p2 = plane.col(1);
    if ((xa - plane * (plane.transpose() * xa)).norm() > 1e-9 * ra ||
        (xb - plane * (plane.transpose() * xb)).norm() > 1e-9 * rb)
      throw InvalidArgument("make_bounce_seed: endpoints leave the given plane");
  } else {
    p1 = xa / ra;
    Eigen::VectorXd u = xb - p1.dot(xb) * p1;
    if (u.norm() > 1e-9 * rb) {
      p2 = u / u.norm();  // the endpoints span the plane on their own
    } else {
      std::mt19937 rng(opt.rng_seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      p2 = Eigen::VectorXd::Zero(sys.d);
      do {
        for (int a = 0; a < sys.d; ++a) p2[a] = gauss(rng);
        p2 -= p1.dot(p2) * p1;
      } while (p2.norm() < 1e-6);
      p2 /= p2.norm();
    }
  }

  const double theta_b = std::atan2(p2.dot(xb), p1.dot(xb));
  const double target = opt.half_turns * M_PI;
  const double sweep = theta_b + 2.0 * M_PI * std::round((target - theta_b) / (2.0 * M_PI));

  const double m1 = sys.masses[0], m2 = sys.masses[1], msum = m1 + m2;
  DiscretePath p;
  p.system = sys;
  p.t1 = t1;
  p.t2 = t2;
  p.nodes.resize(static_cast<size_t>(m));
  p.nodes.front() = qa;
  p.nodes.back() = qb;
  for (int k = 1; k + 1 < m; ++k) {
    const double u = static_cast<double>(k) / (m - 1);
    const double shape = opt.dip + (1.0 - opt.dip) * (2.0 * u - 1.0) * (2.0 * u - 1.0);
    const double r = ((1.0 - u) * ra + u * rb) * shape;
    const double th = sweep * u;
    const Eigen::VectorXd x = r * (std::cos(th) * p1 + std::sin(th) * p2);
    Config q(2, sys.d);
    q.row(0) = -(m2 / msum) * x.transpose();
    q.row(1) = (m1 / msum) * x.transpose();
    p.nodes[static_cast<size_t>(k)] = std::move(q);
  }
  p.validate();
  return p;
}

}  // namespace morsenb

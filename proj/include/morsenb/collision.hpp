#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "morsenb/continuation.hpp"
#include "morsenb/limit.hpp"

namespace morsenb {

// One continuation stage seen from a collapsing cluster: the regularization
// strength, the fitted minimal separation and the time it occurs at.
struct DeltaRecord {
  double eps = 0.0;
  double delta = 0.0;
  double t_star = 0.0;
};

inline void to_json(nlohmann::json& j, const DeltaRecord& r) {
  j = nlohmann::json{{"eps", r.eps}, {"delta", r.delta}, {"t_star", r.t_star}};
}

inline void from_json(const nlohmann::json& j, DeltaRecord& r) {
  r.eps = j.at("eps").get<double>();
  r.delta = j.at("delta").get<double>();
  r.t_star = j.at("t_star").get<double>();
}

enum class CollisionKind { binary, higher };

// A cluster whose pair separations collapse along the continuation: the body
// set, the collapse instant on the limit path, the per-stage (eps, delta, t)
// series and the fitted scaling class lambda = lim eps_n / delta_n^{2-alpha}.
// The lambda fit uses only stages whose delta sits above the mesh floor;
// floored stages measure the grid, not the orbit.
struct CollisionEvent {
  std::vector<int> cluster;  // sorted body ids
  double time = 0.0;
  CollisionKind kind = CollisionKind::binary;
  bool isolated = false;
  std::vector<DeltaRecord> delta_series;  // one entry per sequence record
  double lambda_fit = 0.0;                // +infinity for the strong-scaling class
  double fit_slope = 0.0;                 // d(log eps)/d(log delta) over the fitted stages
  int fit_count = 0;                      // stages that entered the fit
  bool fit_refined = false;               // fitted deltas re-solved on a fine grid
  std::vector<double> refined_deltas;     // per refined stage, empty otherwise
};

inline void to_json(nlohmann::json& j, const CollisionEvent& e) {
  j = nlohmann::json{{"cluster", e.cluster},
                     {"time", e.time},
                     {"kind", e.kind == CollisionKind::binary ? "binary" : "higher"},
                     {"isolated", e.isolated},
                     {"delta_series", e.delta_series},
                     {"fit_slope", e.fit_slope},
                     {"fit_count", e.fit_count},
                     {"fit_refined", e.fit_refined},
                     {"refined_deltas", e.refined_deltas}};
  if (std::isinf(e.lambda_fit))
    j["lambda_fit"] = "infinity";
  else
    j["lambda_fit"] = e.lambda_fit;
}

// Detection and classification knobs. Collapse is judged from the fitted
// delta decay, never from an absolute distance: paths with eps > 0 never
// truly collide, only the sequence behavior defines a collision.
struct ThresholdRule {
  double collapse_ratio = 0.5;    // pair collapses iff delta_last <= ratio * delta_first
  double merge_cells = 1.0;       // cluster-merge time tolerance, in grid cells
  double floor_factor = 2.0;      // delta below factor * h^{2/(2+alpha)} is mesh-floored
  double infinite_factor = 10.0;  // ratio growth beyond this reads as lambda = infinity
  bool refine = false;            // re-solve early stages on a fine grid before fitting
  int refine_nodes = 32769;
  int refine_max_records = 3;
  double refine_tol = 1e-9;
  int refine_max_iter = 200;
};

// Smallest delta a uniform grid of spacing h can represent for a collision
// passage: below factor * h^{2/(2+alpha)} the fitted minimum measures the
// mesh, not the trajectory (the passage spans O(1) grid cells there).
inline double mesh_floor_delta(double alpha, double h, double factor) {
  return factor * std::pow(h, 2.0 / (2.0 + alpha));
}

// Piecewise-linear resample of a path onto a uniform grid with m nodes.
inline DiscretePath resample_path(const DiscretePath& p, int m) {
  if (m < 3) throw InvalidArgument("resample_path: need M >= 3");
  DiscretePath q;
  q.system = p.system;
  q.t1 = p.t1;
  q.t2 = p.t2;
  q.nodes.resize(static_cast<size_t>(m));
  for (int k = 0; k < m; ++k)
    q.nodes[static_cast<size_t>(k)] = p.eval_at(p.t1 + (p.t2 - p.t1) * k / (m - 1));
  return q;
}

namespace detail {

// Symmetric block-tridiagonal matrix: diagonal blocks D[0..n-1] and upper
// couplings U[k] between blocks k and k+1.
struct SymmetricBlockTridiagonal {
  int n = 0, b = 0;
  std::vector<Eigen::MatrixXd> D, U;
  void init(int n_, int b_) {
    n = n_;
    b = b_;
    D.assign(static_cast<size_t>(n), Eigen::MatrixXd::Zero(b, b));
    U.assign(static_cast<size_t>(n - 1), Eigen::MatrixXd::Zero(b, b));
  }
  Eigen::VectorXd mul(const Eigen::VectorXd& x) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<long>(n) * b);
    for (int k = 0; k < n; ++k) {
      r.segment(static_cast<long>(k) * b, b) +=
          D[static_cast<size_t>(k)] * x.segment(static_cast<long>(k) * b, b);
      if (k + 1 < n) {
        r.segment(static_cast<long>(k) * b, b) +=
            U[static_cast<size_t>(k)] * x.segment(static_cast<long>(k + 1) * b, b);
        r.segment(static_cast<long>(k + 1) * b, b) +=
            U[static_cast<size_t>(k)].transpose() * x.segment(static_cast<long>(k) * b, b);
      }
    }
    return r;
  }
};

// Unpivoted block LDLT of a symmetric block-tridiagonal matrix. Each Schur
// block S_k = D_k - L_k U_{k-1} is factored densely; the solve runs the usual
// forward / diagonal / backward sweeps.
struct BlockTridiagonalLdlt {
  int n = 0, b = 0;
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> S;
  std::vector<Eigen::MatrixXd> L;  // L[k] couples block k to k-1, k >= 1
  bool ok = true;
  void compute(const SymmetricBlockTridiagonal& a) {
    n = a.n;
    b = a.b;
    ok = true;
    S.resize(static_cast<size_t>(n));
    L.assign(static_cast<size_t>(n), Eigen::MatrixXd());
    S[0].compute(a.D[0]);
    if (S[0].info() != Eigen::Success) ok = false;
    for (int k = 1; k < n && ok; ++k) {
      L[static_cast<size_t>(k)] =
          S[static_cast<size_t>(k - 1)].solve(a.U[static_cast<size_t>(k - 1)]).transpose();
      const Eigen::MatrixXd s =
          a.D[static_cast<size_t>(k)] - L[static_cast<size_t>(k)] * a.U[static_cast<size_t>(k - 1)];
      S[static_cast<size_t>(k)].compute(s);
      if (S[static_cast<size_t>(k)].info() != Eigen::Success) ok = false;
    }
  }
  Eigen::VectorXd solve(const Eigen::VectorXd& r) const {
    Eigen::VectorXd z = r;
    for (int k = 1; k < n; ++k)
      z.segment(static_cast<long>(k) * b, b) -=
          L[static_cast<size_t>(k)] * z.segment(static_cast<long>(k - 1) * b, b);
    for (int k = 0; k < n; ++k)
      z.segment(static_cast<long>(k) * b, b) =
          S[static_cast<size_t>(k)].solve(z.segment(static_cast<long>(k) * b, b)).eval();
    for (int k = n - 2; k >= 0; --k)
      z.segment(static_cast<long>(k) * b, b) -=
          L[static_cast<size_t>(k + 1)].transpose() * z.segment(static_cast<long>(k + 1) * b, b);
    return z;
  }
};

// Fine-grid replica of ActionProblem with block-tridiagonal storage. The
// regular problem assembles a dense H1 Gram, which caps the node count; this
// one factors the tridiagonal Gram once and never forms a dense matrix, so
// refinement grids of 10^4..10^5 nodes stay cheap.
struct BandedActionProblem {
  MassSystem sys;
  ReducedBasis rb;
  double eps, t1, t2;
  int m;
  Eigen::VectorXd ya, yb;
  Eigen::MatrixXd lift;
  SymmetricBlockTridiagonal gram;
  BlockTridiagonalLdlt gram_f;

  BandedActionProblem(const DiscretePath& p, double e)
      : sys(p.system), rb(p.system), eps(e), t1(p.t1), t2(p.t2), m(p.m_nodes()) {
    ya = rb.reduce(p.nodes.front());
    yb = rb.reduce(p.nodes.back());
    lift = rb.lift_matrix();
    const double hh = h();
    const int bb = block();
    gram.init(m - 2, bb);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(bb, bb);
    for (int j = 0; j < m - 2; ++j) {
      gram.D[static_cast<size_t>(j)] = (2.0 / hh + hh) * id;
      if (j + 1 < m - 2) gram.U[static_cast<size_t>(j)] = -id / hh;
    }
    gram_f.compute(gram);
  }
  double h() const { return (t2 - t1) / (m - 1); }
  int block() const { return rb.dim(); }
  int dim() const { return (m - 2) * block(); }

  DiscretePath path_from_interior(const Eigen::VectorXd& y) const {
    DiscretePath p;
    p.system = sys;
    p.t1 = t1;
    p.t2 = t2;
    p.nodes.resize(static_cast<size_t>(m));
    p.nodes.front() = rb.lift(ya);
    p.nodes.back() = rb.lift(yb);
    for (int k = 1; k + 1 < m; ++k)
      p.nodes[static_cast<size_t>(k)] =
          rb.lift(y.segment(static_cast<long>(k - 1) * block(), block()));
    return p;
  }
  Eigen::VectorXd interior_from_path(const DiscretePath& p) const {
    Eigen::VectorXd y(dim());
    for (int k = 1; k + 1 < m; ++k)
      y.segment(static_cast<long>(k - 1) * block(), block()) =
          rb.reduce(p.nodes[static_cast<size_t>(k)]);
    return y;
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd& y) const {
    const DiscretePath p = path_from_interior(y);
    const double hh = h();
    const int bb = block();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    std::vector<Eigen::VectorXd> yr(static_cast<size_t>(m));
    yr.front() = ya;
    yr.back() = yb;
    for (int k = 1; k + 1 < m; ++k)
      yr[static_cast<size_t>(k)] = y.segment(static_cast<long>(k - 1) * bb, bb);
    for (int k = 1; k + 1 < m; ++k)
      g.segment(static_cast<long>(k - 1) * bb, bb) =
          (2.0 * yr[static_cast<size_t>(k)] - yr[static_cast<size_t>(k - 1)] -
           yr[static_cast<size_t>(k + 1)]) /
          hh;
    for (int k = 0; k + 1 < m; ++k) {
      const Config gm = grad_potential(sys, p.segment_midpoint(k), eps);
      const Eigen::VectorXd gr = rb.pull_gradient(gm) * (0.5 * hh);
      if (k >= 1) g.segment(static_cast<long>(k - 1) * bb, bb) += gr;
      if (k + 1 <= m - 2) g.segment(static_cast<long>(k) * bb, bb) += gr;
    }
    return g;
  }
  SymmetricBlockTridiagonal hessian_tri(const Eigen::VectorXd& y) const {
    const DiscretePath p = path_from_interior(y);
    const double hh = h();
    const int bb = block();
    SymmetricBlockTridiagonal hm;
    hm.init(m - 2, bb);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(bb, bb);
    for (int j = 0; j < m - 2; ++j) {
      hm.D[static_cast<size_t>(j)] += (2.0 / hh) * id;
      if (j + 1 < m - 2) hm.U[static_cast<size_t>(j)] -= id / hh;
    }
    for (int k = 0; k + 1 < m; ++k) {
      const Eigen::MatrixXd hq = hessian_dense(sys, p.segment_midpoint(k), eps);
      const Eigen::MatrixXd hr = (lift.transpose() * hq * lift) * (0.25 * hh);
      const int kl = k - 1, kr = k;
      if (kl >= 0) hm.D[static_cast<size_t>(kl)] += hr;
      if (kr <= m - 3) hm.D[static_cast<size_t>(kr)] += hr;
      if (kl >= 0 && kr <= m - 3) hm.U[static_cast<size_t>(kl)] += hr;
    }
    return hm;
  }
  double residual(const Eigen::VectorXd& g) const { return std::sqrt(g.dot(gram_f.solve(g))); }
};

struct BandedNewtonResult {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

// Damped Newton on the banded problem. The deep-collision arc carries a
// near-null time-translation mode, so a successful regularization tau is
// carried (shrunk) into the next iteration instead of restarting from zero;
// restarting wastes most iterations re-climbing the tau ladder.
inline BandedNewtonResult banded_newton(const BandedActionProblem& p, Eigen::VectorXd& y,
                                        double tol, int max_iter) {
  BandedNewtonResult out;
  Eigen::VectorXd g = p.gradient(y);
  double res = p.residual(g);
  double tau_carry = 0.0;
  for (; out.iterations < max_iter; ++out.iterations) {
    if (res <= tol) break;
    const SymmetricBlockTridiagonal hm = p.hessian_tri(y);
    double hscale = 0.0;
    for (const auto& d : hm.D) hscale = std::max(hscale, d.cwiseAbs().maxCoeff());
    double tau = tau_carry;
    bool accepted = false;
    for (int reg = 0; reg < 14 && !accepted; ++reg) {
      SymmetricBlockTridiagonal hs = hm;
      if (tau > 0.0)
        for (int j = 0; j < hs.n; ++j) {
          hs.D[static_cast<size_t>(j)] += tau * p.gram.D[static_cast<size_t>(j)];
          if (j + 1 < hs.n) hs.U[static_cast<size_t>(j)] += tau * p.gram.U[static_cast<size_t>(j)];
        }
      BlockTridiagonalLdlt f;
      f.compute(hs);
      if (f.ok) {
        const Eigen::VectorXd step = f.solve(-g);
        if (step.allFinite()) {
          const double snorm = std::sqrt(step.dot(p.gram.mul(step)));
          double scale = (snorm > 1.0) ? 1.0 / snorm : 1.0;
          for (int half = 0; half < 10; ++half) {
            const Eigen::VectorXd trial = y + scale * step;
            double tres = std::numeric_limits<double>::infinity();
            Eigen::VectorXd tg;
            try {
              tg = p.gradient(trial);
              tres = p.residual(tg);
            } catch (const Error&) {
              // stepped into the distance floor; halve and retry
            }
            if (tres < res || tres <= tol) {
              y = trial;
              g = tg;
              res = tres;
              accepted = true;
              break;
            }
            scale *= 0.5;
          }
        }
      }
      if (!accepted) tau = (tau == 0.0) ? 1e-11 * (hscale > 0 ? hscale : 1.0) : tau * 100.0;
    }
    tau_carry = accepted ? tau * 0.01 : 0.0;
    if (tau_carry < 1e-14 * hscale) tau_carry = 0.0;
    if (!accepted) break;
  }
  out.residual = res;
  out.converged = res <= tol;
  return out;
}

inline Eigen::VectorXd relative_at_node(const DiscretePath& p, int i, int j, int k) {
  return (p.nodes[static_cast<size_t>(k)].row(j) - p.nodes[static_cast<size_t>(k)].row(i))
      .transpose();
}

// Best-fit plane of the pair's relative motion: the top two right singular
// vectors of the stacked relative vectors. degenerate is set for rectilinear
// motion, where only e1 is meaningful.
struct PairPlane {
  Eigen::VectorXd e1, e2;
  bool degenerate = false;
};

inline PairPlane pair_plane(const DiscretePath& p, int i, int j) {
  Eigen::MatrixXd rel(p.m_nodes(), p.system.d);
  for (int k = 0; k < p.m_nodes(); ++k) rel.row(k) = relative_at_node(p, i, j, k).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rel, Eigen::ComputeThinV);
  PairPlane pl;
  pl.e1 = svd.matrixV().col(0);
  pl.e2 = svd.matrixV().col(1);
  const auto& sv = svd.singularValues();
  pl.degenerate = sv.size() < 2 || sv[1] <= 1e-10 * sv[0];
  return pl;
}

inline double circular_mean(const std::vector<double>& angles) {
  double s = 0.0, c = 0.0;
  for (double a : angles) {
    s += std::sin(a);
    c += std::cos(a);
  }
  return std::atan2(s, c);
}

// Largest member-pair separation over the whole path, the macroscopic length
// scale the collision collapse is measured against.
inline double macro_separation(const DiscretePath& p, int i, int j) {
  double r = 0.0;
  for (int k = 0; k < p.m_nodes(); ++k) r = std::max(r, relative_at_node(p, i, j, k).norm());
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// detection

struct CollisionEvent;
inline double default_isolation_window(const WeakCriticalSequence& seq, const CollisionEvent& ev,
                                       const std::vector<CollisionEvent>& all);
inline bool isolation_check(const WeakCriticalSequence& seq, const CollisionEvent& ev, double a);

// Pairs whose fitted minimal separation collapses along the sequence become
// events; collapsing pairs sharing a body at coincident times (within
// merge_cells grid cells) merge transitively into one cluster. Each pair is
// represented by its global separation minimum, so a pair colliding twice
// surfaces as the deeper event only; isolation_check exposes the second one.
// With rule.refine the first refine_max_records stages are re-solved on a
// refine_nodes grid (warm-chained) and the lambda fit uses those deltas: on
// the coarse grid mesh-floored stages would otherwise drag the fit to zero.
inline std::vector<CollisionEvent> detect_collisions(const WeakCriticalSequence& seq,
                                                     const ThresholdRule& rule = {}) {
  const size_t count = seq.records.size();
  if (count < 3)
    throw InsufficientData("detect_collisions: need at least 3 records, got " +
                           std::to_string(count));
  const DiscretePath& limit = seq.records.back().path;
  const MassSystem& sys = limit.system;
  const double alpha = sys.alpha;
  const size_t pairs = seq.records.front().pair_separations.size();
  for (const auto& rec : seq.records)
    if (rec.pair_separations.size() != pairs)
      throw InvalidArgument("detect_collisions: records disagree on the pair count");

  // collapsing pairs
  std::vector<size_t> collapsing;
  for (size_t p = 0; p < pairs; ++p) {
    const double first = seq.records.front().pair_separations[p].delta;
    const double last = seq.records.back().pair_separations[p].delta;
    if (last <= rule.collapse_ratio * first) collapsing.push_back(p);
  }
  if (collapsing.empty()) return {};

  // transitive merge of collapsing pairs that share a body at the same time
  const double t_tol = rule.merge_cells * limit.h();
  std::vector<size_t> root(collapsing.size());
  for (size_t a = 0; a < root.size(); ++a) root[a] = a;
  std::function<size_t(size_t)> find = [&](size_t a) {
    while (root[a] != a) a = root[a] = root[root[a]];
    return a;
  };
  for (size_t a = 0; a < collapsing.size(); ++a)
    for (size_t b = a + 1; b < collapsing.size(); ++b) {
      const SeparationEvent& ea = seq.records.back().pair_separations[collapsing[a]];
      const SeparationEvent& eb = seq.records.back().pair_separations[collapsing[b]];
      const bool share = ea.body_i == eb.body_i || ea.body_i == eb.body_j ||
                         ea.body_j == eb.body_i || ea.body_j == eb.body_j;
      if (share && std::abs(ea.t_star - eb.t_star) <= t_tol) root[find(a)] = find(b);
    }

  // optional fine-grid refinement of the early stages, shared by all events
  std::vector<DiscretePath> refined;
  if (rule.refine) {
    const int nref =
        std::min<int>(rule.refine_max_records, static_cast<int>(count));
    DiscretePath cur = resample_path(seq.records.front().path, rule.refine_nodes);
    try {
      for (int n = 0; n < nref; ++n) {
        detail::BandedActionProblem prob(cur, seq.records[static_cast<size_t>(n)].eps);
        Eigen::VectorXd y = prob.interior_from_path(cur);
        const detail::BandedNewtonResult r =
            detail::banded_newton(prob, y, rule.refine_tol, rule.refine_max_iter);
        if (!r.converged) break;
        cur = prob.path_from_interior(y);
        refined.push_back(cur);
      }
    } catch (const Error&) {
      // keep whatever prefix converged; the fit falls back to coarse beyond it
    }
  }

  std::vector<CollisionEvent> events;
  for (size_t a = 0; a < collapsing.size(); ++a) {
    if (find(a) != a) continue;
    std::vector<size_t> members;
    for (size_t b = 0; b < collapsing.size(); ++b)
      if (find(b) == a) members.push_back(collapsing[b]);

    CollisionEvent ev;
    for (size_t p : members) {
      const SeparationEvent& se = seq.records.back().pair_separations[p];
      ev.cluster.push_back(se.body_i);
      ev.cluster.push_back(se.body_j);
    }
    std::sort(ev.cluster.begin(), ev.cluster.end());
    ev.cluster.erase(std::unique(ev.cluster.begin(), ev.cluster.end()), ev.cluster.end());
    ev.kind = ev.cluster.size() == 2 ? CollisionKind::binary : CollisionKind::higher;

    // per-stage series: diameter proxy is the widest member pair, the instant
    // comes from the deepest one
    ev.delta_series.resize(count);
    for (size_t n = 0; n < count; ++n) {
      double dmax = 0.0, dmin = std::numeric_limits<double>::infinity(), t = 0.0;
      for (size_t p : members) {
        const SeparationEvent& se = seq.records[n].pair_separations[p];
        dmax = std::max(dmax, se.delta);
        if (se.delta < dmin) {
          dmin = se.delta;
          t = se.t_star;
        }
      }
      ev.delta_series[n] = {seq.records[n].eps, dmax, t};
    }
    ev.time = ev.delta_series.back().t_star;

    // lambda fit on pre-floor stages, refined deltas when available (binary
    // clusters only; a fine re-solve of a higher cluster is out of scope)
    std::vector<double> fit_delta, fit_eps;
    const bool use_refined = !refined.empty() && ev.kind == CollisionKind::binary;
    for (size_t n = 0; n < count; ++n) {
      double d = ev.delta_series[n].delta;
      double hn = seq.records[n].path.h();
      if (use_refined && n < refined.size()) {
        const SeparationEvent se =
            pair_separation(refined[n], ev.cluster[0], ev.cluster[1]);
        d = se.delta;
        hn = refined[n].h();
        ev.refined_deltas.push_back(d);
      }
      if (d >= mesh_floor_delta(alpha, hn, rule.floor_factor)) {
        fit_delta.push_back(d);
        fit_eps.push_back(ev.delta_series[n].eps);
      }
    }
    ev.fit_refined = use_refined;
    if (fit_delta.empty()) {
      // every stage is floored; report the first stage's ratio, the least bad
      fit_delta.push_back(ev.delta_series.front().delta);
      fit_eps.push_back(ev.delta_series.front().eps);
    }
    ev.fit_count = static_cast<int>(fit_delta.size());
    const auto ratio = [&](size_t n) {
      return fit_eps[n] / std::pow(fit_delta[n], 2.0 - alpha);
    };
    if (fit_delta.size() >= 2) {
      double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
      for (size_t n = 0; n < fit_delta.size(); ++n) {
        const double x = std::log(fit_delta[n]);
        const double y = std::log(fit_eps[n]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
      }
      const double k = static_cast<double>(fit_delta.size());
      const double denom = k * sxx - sx * sx;
      ev.fit_slope = denom != 0.0 ? (k * sxy - sx * sy) / denom : 0.0;
      const double growth = ratio(fit_delta.size() - 1) / ratio(0);
      ev.lambda_fit = growth > rule.infinite_factor ? kLambdaInfinity
                                                    : ratio(fit_delta.size() - 1);
    } else {
      ev.fit_slope = 0.0;
      ev.lambda_fit = ratio(0);
    }
    events.push_back(std::move(ev));
  }
  std::sort(events.begin(), events.end(),
            [](const CollisionEvent& x, const CollisionEvent& y) { return x.time < y.time; });

  // isolation needs the full event list for the window choice
  for (auto& ev : events) {
    const double a = default_isolation_window(seq, ev, events);
    try {
      ev.isolated = isolation_check(seq, ev, a);
    } catch (const WindowOutOfDomain&) {
      ev.isolated = false;  // no admissible window, cannot certify isolation
    }
  }
  return events;
}

inline int count_binary_events(const std::vector<CollisionEvent>& events) {
  int b = 0;
  for (const auto& e : events)
    if (e.kind == CollisionKind::binary) ++b;
  return b;
}

// ---------------------------------------------------------------------------
// isolation

// Largest window half-width that keeps [t0 - a, t0 + a] inside the domain and
// clear of the midpoint to any other event.
inline double default_isolation_window(const WeakCriticalSequence& seq, const CollisionEvent& ev,
                                       const std::vector<CollisionEvent>& all = {}) {
  const DiscretePath& limit = seq.records.back().path;
  double a = std::min(ev.time - limit.t1, limit.t2 - ev.time);
  for (const auto& other : all) {
    const double gap = std::abs(other.time - ev.time);
    if (gap > 0.0) a = std::min(a, 0.5 * gap);
  }
  return 0.9 * a;
}

// True iff, on the limit path over [t0 - a, t0 + a], every cluster member
// stays clear of every outside body and the members approach each other in a
// single interval around t0. The clearance floor is resolution-aware:
// 10 x max(delta_last, h^{2/(2+alpha)}), capped below half the macroscopic
// pair separation so it stays meaningful on tight systems.
inline bool isolation_check(const WeakCriticalSequence& seq, const CollisionEvent& ev, double a) {
  if (seq.records.empty()) throw InvalidArgument("isolation_check: sequence has no records");
  if (!(a > 0.0)) throw InvalidArgument("isolation_check: window half-width must be positive");
  const DiscretePath& limit = seq.records.back().path;
  const double t0 = ev.time;
  if (!(t0 - a > limit.t1) || !(t0 + a < limit.t2))
    throw WindowOutOfDomain("isolation_check: [t0 - a, t0 + a] = [" + std::to_string(t0 - a) +
                            ", " + std::to_string(t0 + a) + "] leaves (" +
                            std::to_string(limit.t1) + ", " + std::to_string(limit.t2) + ")");

  const MassSystem& sys = limit.system;
  std::vector<char> member(static_cast<size_t>(sys.n_bodies()), 0);
  for (int i : ev.cluster) {
    if (i < 0 || i >= sys.n_bodies())
      throw InvalidArgument("isolation_check: cluster body out of range");
    member[static_cast<size_t>(i)] = 1;
  }

  double macro = 0.0;
  for (size_t pi = 0; pi < ev.cluster.size(); ++pi)
    for (size_t pj = pi + 1; pj < ev.cluster.size(); ++pj)
      macro = std::max(macro, detail::macro_separation(limit, ev.cluster[pi], ev.cluster[pj]));
  const double dlast = ev.delta_series.empty() ? 0.0 : ev.delta_series.back().delta;
  double floor = 10.0 * std::max(dlast, mesh_floor_delta(sys.alpha, limit.h(), 1.0));
  floor = std::min(floor, 0.45 * macro);

  // sample times: grid nodes in the window, a uniform fill, and t0 itself
  std::vector<double> ts;
  for (int k = 0; k < limit.m_nodes(); ++k) {
    const double t = limit.time_at(k);
    if (t >= t0 - a && t <= t0 + a) ts.push_back(t);
  }
  for (int k = 0; k <= 128; ++k) ts.push_back(t0 - a + 2.0 * a * k / 128.0);
  ts.push_back(t0);
  std::sort(ts.begin(), ts.end());

  int runs = 0;
  bool in_run = false, t0_in_run = false;
  for (double t : ts) {
    const Config q = limit.eval_at(t);
    double outsider = std::numeric_limits<double>::infinity();
    double within = std::numeric_limits<double>::infinity();
    for (int i = 0; i < sys.n_bodies(); ++i)
      for (int j = i + 1; j < sys.n_bodies(); ++j) {
        const double r = (q.row(i) - q.row(j)).norm();
        if (member[static_cast<size_t>(i)] && member[static_cast<size_t>(j)])
          within = std::min(within, r);
        else if (member[static_cast<size_t>(i)] || member[static_cast<size_t>(j)])
          outsider = std::min(outsider, r);
      }
    if (outsider < floor) return false;
    const bool close = within < floor;
    if (close && !in_run) ++runs;
    if (close && t == t0) t0_in_run = true;
    in_run = close;
  }
  return runs == 1 && t0_in_run;
}

// ---------------------------------------------------------------------------
// cluster energy

struct ClusterEnergySeries {
  std::vector<double> t;       // segment midpoints
  std::vector<double> energy;  // K_I - U_I - eps * fU_I
};

// Cluster energy on segment midpoints, velocities from segment differences.
// Only pairs inside the cluster touch the potential, so a lone body never
// trips the collision floor of an unrelated close pair.
inline ClusterEnergySeries cluster_energy_series(const DiscretePath& path,
                                                 const std::vector<int>& cluster, double eps) {
  path.system.validate();
  if (cluster.empty()) throw InvalidArgument("cluster_energy_series: empty cluster");
  std::vector<int> I = cluster;
  std::sort(I.begin(), I.end());
  if (std::unique(I.begin(), I.end()) != I.end())
    throw InvalidArgument("cluster_energy_series: duplicate body in cluster");
  for (int i : I)
    if (i < 0 || i >= path.system.n_bodies())
      throw InvalidArgument("cluster_energy_series: body out of range");

  ClusterEnergySeries out;
  const int segs = path.m_nodes() - 1;
  out.t.reserve(static_cast<size_t>(segs));
  out.energy.reserve(static_cast<size_t>(segs));
  for (int k = 0; k < segs; ++k) {
    const Config v = path.segment_velocity(k);
    const Config q = path.segment_midpoint(k);
    double kin = 0.0;
    for (int i : I) kin += 0.5 * path.system.masses[i] * v.row(i).squaredNorm();
    double pot = 0.0;
    if (I.size() >= 2) {
      pot = potential_weak_scoped(path.system, q, I, PairScope::within) +
            eps * potential_strong_scoped(path.system, q, I, PairScope::within);
    }
    out.t.push_back(path.t1 + (k + 0.5) * path.h());
    out.energy.push_back(kin - pot);
  }
  return out;
}

// ---------------------------------------------------------------------------
// generalized-solution audit

struct AuditOptions {
  double tol_el = 1e-4;     // motion-equation residual off collision windows
  double tol_drift = 1e-6;  // relative total-energy drift off windows
  double tol_jump = 1e-3;   // relative cluster-energy jump across a window
  ThresholdRule rule;       // detection rule for condition (i)
};

// Four proxies for the defining conditions of a generalized solution:
// (i) the collision set is a finite union of isolated instants, (ii) the
// weak-force motion equation holds pointwise off the collision windows,
// (iii) the total energy is constant off the windows, (iv) each colliding
// cluster's energy passes continuously across its window.
struct GeneralizedSolutionAudit {
  bool finite_collision_set = false;
  bool motion_equation_off_windows = false;
  bool energy_constant_off_windows = false;
  bool cluster_energy_continuous = false;

  int n_events = 0;
  double el_residual_max = 0.0;
  double energy_drift = 0.0;
  double max_energy_jump = 0.0;
  double r_window = 0.0;
  int excluded_nodes = 0;
  int total_nodes = 0;
  std::vector<CollisionEvent> events;

  bool all_pass() const {
    return finite_collision_set && motion_equation_off_windows && energy_constant_off_windows &&
           cluster_energy_continuous;
  }
};

inline void to_json(nlohmann::json& j, const GeneralizedSolutionAudit& r) {
  j = nlohmann::json{{"finite_collision_set", r.finite_collision_set},
                     {"motion_equation_off_windows", r.motion_equation_off_windows},
                     {"energy_constant_off_windows", r.energy_constant_off_windows},
                     {"cluster_energy_continuous", r.cluster_energy_continuous},
                     {"all_pass", r.all_pass()},
                     {"n_events", r.n_events},
                     {"el_residual_max", r.el_residual_max},
                     {"energy_drift", r.energy_drift},
                     {"max_energy_jump", r.max_energy_jump},
                     {"r_window", r.r_window},
                     {"excluded_nodes", r.excluded_nodes},
                     {"total_nodes", r.total_nodes},
                     {"events", r.events}};
}

// The audit runs on the last record. Its path is an eps-critical point, so
// off the windows the weak equation holds up to the strong-force remainder
// 2 eps m_i m_j / r^3; the window radius inverts that bound at half the
// tolerance, r = (4 eps max(m_i m_j) / tol)^{1/3}, capped below the
// macroscopic pair separation so some of the path always survives.
inline GeneralizedSolutionAudit audit_generalized_solution(const WeakCriticalSequence& seq,
                                                           const AuditOptions& opt = {}) {
  if (seq.records.empty())
    throw InvalidArgument("audit_generalized_solution: sequence has no records");
  const CriticalPointRecord& rec = seq.records.back();
  const DiscretePath& path = rec.path;
  const MassSystem& sys = path.system;
  const int m = path.m_nodes();
  const double hh = path.h();

  GeneralizedSolutionAudit rep;
  rep.events = detect_collisions(seq, opt.rule);
  rep.n_events = static_cast<int>(rep.events.size());
  rep.total_nodes = m;

  // (i) finitely many events, each isolated
  rep.finite_collision_set = true;
  for (const auto& ev : rep.events)
    if (!ev.isolated) rep.finite_collision_set = false;

  // window radius from the strong-force contamination bound
  double mm = 0.0;
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int j = i + 1; j < sys.n_bodies(); ++j) mm = std::max(mm, sys.masses[i] * sys.masses[j]);
  double macro = 0.0;
  for (const auto& ev : rep.events)
    for (size_t pi = 0; pi < ev.cluster.size(); ++pi)
      for (size_t pj = pi + 1; pj < ev.cluster.size(); ++pj)
        macro = std::max(macro, detail::macro_separation(path, ev.cluster[pi], ev.cluster[pj]));
  if (macro == 0.0)
    for (int i = 0; i < sys.n_bodies(); ++i)
      for (int j = i + 1; j < sys.n_bodies(); ++j)
        macro = std::max(macro, detail::macro_separation(path, i, j));
  rep.r_window = std::min(std::cbrt(4.0 * rec.eps * mm / opt.tol_el), 0.9 * macro);

  // a node is excluded when any event's cluster is tighter than r_window
  std::vector<char> excluded(static_cast<size_t>(m), 0);
  for (const auto& ev : rep.events)
    for (int k = 0; k < m; ++k) {
      double within = std::numeric_limits<double>::infinity();
      for (size_t pi = 0; pi < ev.cluster.size(); ++pi)
        for (size_t pj = pi + 1; pj < ev.cluster.size(); ++pj)
          within = std::min(within, detail::relative_at_node(path, ev.cluster[pi],
                                                             ev.cluster[pj], k)
                                        .norm());
      if (within < rep.r_window) excluded[static_cast<size_t>(k)] = 1;
    }
  for (char e : excluded) rep.excluded_nodes += e;

  // (ii) weak motion equation at interior off-window nodes: the discrete
  // stationarity ties the mass-weighted second difference to the average of
  // the two adjacent midpoint forces exactly, so the eps = 0 residual
  // measures only the strong-force remainder plus rounding
  for (int k = 1; k + 1 < m; ++k) {
    if (excluded[static_cast<size_t>(k)] || excluded[static_cast<size_t>(k - 1)] ||
        excluded[static_cast<size_t>(k + 1)])
      continue;
    const Config acc = (path.nodes[static_cast<size_t>(k + 1)] -
                        2.0 * path.nodes[static_cast<size_t>(k)] +
                        path.nodes[static_cast<size_t>(k - 1)]) /
                       (hh * hh);
    const Config force = 0.5 * (grad_potential(sys, path.segment_midpoint(k - 1), 0.0) +
                                grad_potential(sys, path.segment_midpoint(k), 0.0));
    double resid = 0.0;
    for (int i = 0; i < sys.n_bodies(); ++i)
      resid = std::max(resid, (sys.masses[i] * acc.row(i) - force.row(i)).norm());
    rep.el_residual_max = std::max(rep.el_residual_max, resid);
  }
  rep.motion_equation_off_windows = rep.el_residual_max <= opt.tol_el;

  // (iii) total energy off windows; the scale guard covers zero-energy paths
  std::vector<int> all(static_cast<size_t>(sys.n_bodies()));
  for (int i = 0; i < sys.n_bodies(); ++i) all[static_cast<size_t>(i)] = i;
  const ClusterEnergySeries total = cluster_energy_series(path, all, rec.eps);
  double emin = std::numeric_limits<double>::infinity(), emax = -emin;
  double kin_mean = 0.0;
  std::vector<double> kept;
  for (int k = 0; k + 1 < m; ++k) {
    if (excluded[static_cast<size_t>(k)] || excluded[static_cast<size_t>(k + 1)]) continue;
    const double e = total.energy[static_cast<size_t>(k)];
    emin = std::min(emin, e);
    emax = std::max(emax, e);
    kept.push_back(e);
    const Config v = path.segment_velocity(k);
    double kin = 0.0;
    for (int i = 0; i < sys.n_bodies(); ++i) kin += 0.5 * sys.masses[i] * v.row(i).squaredNorm();
    kin_mean += kin;
  }
  if (!kept.empty()) {
    kin_mean /= static_cast<double>(kept.size());
    std::nth_element(kept.begin(), kept.begin() + static_cast<long>(kept.size() / 2), kept.end());
    const double med = kept[kept.size() / 2];
    rep.energy_drift = (emax - emin) / std::max({std::abs(med), kin_mean, 1e-300});
  }
  rep.energy_constant_off_windows = !kept.empty() && rep.energy_drift <= opt.tol_drift;

  // (iv) cluster energy across each window: averages of a few midpoints on
  // either side of the excluded stretch
  rep.cluster_energy_continuous = true;
  for (const auto& ev : rep.events) {
    const ClusterEnergySeries es = cluster_energy_series(path, ev.cluster, rec.eps);
    int lo = m, hi = -1;
    for (int k = 0; k < m; ++k) {
      double within = std::numeric_limits<double>::infinity();
      for (size_t pi = 0; pi < ev.cluster.size(); ++pi)
        for (size_t pj = pi + 1; pj < ev.cluster.size(); ++pj)
          within = std::min(within, detail::relative_at_node(path, ev.cluster[pi],
                                                             ev.cluster[pj], k)
                                        .norm());
      if (within < rep.r_window) {
        lo = std::min(lo, k);
        hi = std::max(hi, k);
      }
    }
    if (hi < 0) continue;  // window never forms, nothing to bridge
    auto side_mean = [&](int from, int to) {
      double s = 0.0;
      int c = 0;
      for (int k = from; k <= to && k < static_cast<int>(es.energy.size()); ++k)
        if (k >= 0) {
          s += es.energy[static_cast<size_t>(k)];
          ++c;
        }
      return c > 0 ? s / c : std::numeric_limits<double>::quiet_NaN();
    };
    const double left = side_mean(lo - 4, lo - 2);   // midpoints fully left of the window
    const double right = side_mean(hi + 1, hi + 3);  // and fully right of it
    if (!std::isfinite(left) || !std::isfinite(right)) {
      rep.cluster_energy_continuous = false;
      continue;
    }
    const double jump = std::abs(right - left) / std::max({std::abs(left), std::abs(right), 1.0});
    rep.max_energy_jump = std::max(rep.max_energy_jump, jump);
    if (jump > opt.tol_jump) rep.cluster_energy_continuous = false;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// pair frame

// A path rewritten in one pair's relative and center coordinates: the row of
// body_i carries eta1 = q_j - q_i, the row of body_j carries the pair's mass
// center, every other row is untouched. Not a DiscretePath: eta nodes do not
// satisfy the center-of-mass constraint.
struct PairFramePath {
  MassSystem system;
  int body_i = 0, body_j = 1;
  double t1 = 0.0, t2 = 1.0;
  std::vector<Config> nodes;

  int m_nodes() const { return static_cast<int>(nodes.size()); }
  double h() const { return (t2 - t1) / (m_nodes() - 1); }
};

inline PairFramePath pair_frame(const DiscretePath& p, int i, int j) {
  const int n = p.system.n_bodies();
  if (i < 0 || j < 0 || i >= n || j >= n || i == j)
    throw InvalidArgument("pair_frame: bad body pair");
  if (i > j) std::swap(i, j);
  PairFramePath e;
  e.system = p.system;
  e.body_i = i;
  e.body_j = j;
  e.t1 = p.t1;
  e.t2 = p.t2;
  const double mi = p.system.masses[i], mj = p.system.masses[j];
  e.nodes.resize(p.nodes.size());
  for (size_t k = 0; k < p.nodes.size(); ++k) {
    Config q = p.nodes[k];
    const Eigen::RowVectorXd rel = p.nodes[k].row(j) - p.nodes[k].row(i);
    const Eigen::RowVectorXd cm =
        (mi * p.nodes[k].row(i) + mj * p.nodes[k].row(j)) / (mi + mj);
    q.row(i) = rel;
    q.row(j) = cm;
    e.nodes[k] = std::move(q);
  }
  return e;
}

inline DiscretePath pair_frame_invert(const PairFramePath& e) {
  const double mi = e.system.masses[e.body_i], mj = e.system.masses[e.body_j];
  const double msum = mi + mj;
  std::vector<Config> nodes(e.nodes.size());
  for (size_t k = 0; k < e.nodes.size(); ++k) {
    Config q = e.nodes[k];
    const Eigen::RowVectorXd rel = e.nodes[k].row(e.body_i);
    const Eigen::RowVectorXd cm = e.nodes[k].row(e.body_j);
    q.row(e.body_i) = cm - (mj / msum) * rel;
    q.row(e.body_j) = cm + (mi / msum) * rel;
    nodes[k] = std::move(q);
  }
  return make_path_seeded(e.system, std::move(nodes), e.t1, e.t2);
}

// Segment kinetic energy in pair-frame variables: the reduced mass carries
// the relative part, the pair mass sum carries the center part, spectators
// keep their own masses. Matches the body-frame kinetic energy identically.
inline double pair_frame_segment_kinetic(const PairFramePath& e, int k) {
  const double hh = e.h();
  const Config d = (e.nodes[static_cast<size_t>(k + 1)] - e.nodes[static_cast<size_t>(k)]) / hh;
  const double mi = e.system.masses[e.body_i], mj = e.system.masses[e.body_j];
  double kin = 0.5 * (mi * mj / (mi + mj)) * d.row(e.body_i).squaredNorm() +
               0.5 * (mi + mj) * d.row(e.body_j).squaredNorm();
  for (int b = 0; b < e.system.n_bodies(); ++b) {
    if (b == e.body_i || b == e.body_j) continue;
    kin += 0.5 * e.system.masses[b] * d.row(b).squaredNorm();
  }
  return kin;
}

// ---------------------------------------------------------------------------
// blow-up

enum class BlowUpCase { finite_lambda, infinite_lambda };

struct BlowUpSample {
  double s = 0.0;
  Eigen::VectorXd xi;
};

// Rescaled near-collision profile of one stage: xi(s) = eta1(t(s)) / delta_n
// with t(s) = delta^{1+alpha/2} s + t_n in the finite-lambda case and
// t(s) = eps^{-1/2} delta^2 s + t_n in the infinite one. The s = 0 sample is
// interpolated quadratically through the three nodes around t_n; grid nodes
// supply the rest.
struct BlowUpProfile {
  BlowUpCase kind = BlowUpCase::finite_lambda;
  double lambda = 0.0;  // +infinity in the infinite case
  int n = 0;            // 1-based stage number
  double eps = 0.0, delta = 0.0, t_center = 0.0;
  double s_lo = 0.0, s_hi = 0.0;
  std::vector<BlowUpSample> samples;  // ascending in s
  double xi0_norm = 0.0;
  double min_norm = 0.0;
  bool pre_asymptotic = false;  // delta still macroscopic at this stage
  bool under_resolved = false;  // grid too coarse to resolve the passage
};

inline void to_json(nlohmann::json& j, const BlowUpProfile& p) {
  nlohmann::json s = nlohmann::json::array(), xi = nlohmann::json::array();
  for (const auto& smp : p.samples) {
    s.push_back(smp.s);
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index a = 0; a < smp.xi.size(); ++a) row.push_back(smp.xi[a]);
    xi.push_back(std::move(row));
  }
  j = nlohmann::json{{"kind", p.kind == BlowUpCase::finite_lambda ? "finite_lambda"
                                                                  : "infinite_lambda"},
                     {"n", p.n},
                     {"eps", p.eps},
                     {"delta", p.delta},
                     {"t_center", p.t_center},
                     {"s_lo", p.s_lo},
                     {"s_hi", p.s_hi},
                     {"s", std::move(s)},
                     {"xi", std::move(xi)},
                     {"xi0_norm", p.xi0_norm},
                     {"min_norm", p.min_norm},
                     {"pre_asymptotic", p.pre_asymptotic},
                     {"under_resolved", p.under_resolved}};
  if (std::isinf(p.lambda))
    j["lambda"] = "infinity";
  else
    j["lambda"] = p.lambda;
}

struct BlowUpOptions {
  std::optional<BlowUpCase> expect;  // force a case; mismatch with the fit throws
  double window = 0.0;               // half-width a in t, 0 picks the default window
  double s_cap = 100.0;              // hard cap on the rescaled range
  double macro_fraction = 0.1;       // delta above fraction * macro scale: pre-asymptotic
  double min_nodes_per_unit_s = 2.0;
};

inline BlowUpProfile blow_up(const WeakCriticalSequence& seq, const CollisionEvent& ev, int n,
                             const BlowUpOptions& opt = {}) {
  if (ev.kind != CollisionKind::binary)
    throw InvalidArgument("blow_up: only binary events have a pair rescaling");
  if (n < 1 || n > static_cast<int>(seq.records.size()))
    throw InvalidArgument("blow_up: stage number out of range");
  if (ev.delta_series.size() != seq.records.size())
    throw InvalidArgument("blow_up: event series does not match the sequence");

  const BlowUpCase fit_case =
      std::isinf(ev.lambda_fit) ? BlowUpCase::infinite_lambda : BlowUpCase::finite_lambda;
  if (opt.expect && *opt.expect != fit_case)
    throw CaseMismatch(std::string("blow_up: fitted lambda is ") +
                       (fit_case == BlowUpCase::finite_lambda ? "finite" : "infinite") +
                       " but the caller forced the other case");

  const CriticalPointRecord& rec = seq.records[static_cast<size_t>(n - 1)];
  const DiscretePath& p = rec.path;
  const DeltaRecord& dr = ev.delta_series[static_cast<size_t>(n - 1)];
  const int i = ev.cluster[0], j = ev.cluster[1];
  const double alpha = p.system.alpha;
  const double w = fit_case == BlowUpCase::finite_lambda
                       ? std::pow(dr.delta, 1.0 + 0.5 * alpha)
                       : dr.delta * dr.delta / std::sqrt(dr.eps);

  double a = opt.window;
  if (!(a > 0.0)) a = 0.9 * std::min(dr.t_star - p.t1, p.t2 - dr.t_star);
  const double S = std::min(a / w, opt.s_cap);

  BlowUpProfile prof;
  prof.kind = fit_case;
  prof.lambda = ev.lambda_fit;
  prof.n = n;
  prof.eps = dr.eps;
  prof.delta = dr.delta;
  prof.t_center = dr.t_star;

  for (int k = 0; k < p.m_nodes(); ++k) {
    const double s = (p.time_at(k) - dr.t_star) / w;
    if (std::abs(s) > S) continue;
    BlowUpSample smp;
    smp.s = s;
    smp.xi = detail::relative_at_node(p, i, j, k) / dr.delta;
    prof.samples.push_back(std::move(smp));
  }

  // s = 0 through the quadratic interpolant of the relative vector; the
  // piecewise-linear chord undershoots the fitted minimum badly
  {
    int k0 = static_cast<int>(std::lround((dr.t_star - p.t1) / p.h()));
    k0 = std::clamp(k0, 1, p.m_nodes() - 2);
    const double ta = p.time_at(k0 - 1), tb = p.time_at(k0), tc = p.time_at(k0 + 1);
    const Eigen::VectorXd ra = detail::relative_at_node(p, i, j, k0 - 1);
    const Eigen::VectorXd rb = detail::relative_at_node(p, i, j, k0);
    const Eigen::VectorXd rc = detail::relative_at_node(p, i, j, k0 + 1);
    const double t = dr.t_star;
    const double la = (t - tb) * (t - tc) / ((ta - tb) * (ta - tc));
    const double lb = (t - ta) * (t - tc) / ((tb - ta) * (tb - tc));
    const double lc = (t - ta) * (t - tb) / ((tc - ta) * (tc - tb));
    BlowUpSample smp;
    smp.s = 0.0;
    smp.xi = (la * ra + lb * rb + lc * rc) / dr.delta;
    prof.samples.push_back(std::move(smp));
  }
  std::sort(prof.samples.begin(), prof.samples.end(),
            [](const BlowUpSample& x, const BlowUpSample& y) { return x.s < y.s; });

  prof.s_lo = prof.samples.front().s;
  prof.s_hi = prof.samples.back().s;
  prof.min_norm = std::numeric_limits<double>::infinity();
  for (const auto& smp : prof.samples) {
    const double r = smp.xi.norm();
    prof.min_norm = std::min(prof.min_norm, r);
    if (smp.s == 0.0) prof.xi0_norm = r;
  }
  prof.pre_asymptotic = dr.delta > opt.macro_fraction * detail::macro_separation(p, i, j);
  prof.under_resolved = w / p.h() < opt.min_nodes_per_unit_s;
  return prof;
}

// Long-format CSV: s, |xi|, xi components.
inline void write_profile_csv(const BlowUpProfile& p, std::ostream& os) {
  os << "s,r";
  const Eigen::Index d = p.samples.empty() ? 0 : p.samples.front().xi.size();
  for (Eigen::Index a = 0; a < d; ++a) os << ",xi" << (a + 1);
  os << "\n";
  os.precision(17);
  for (const auto& smp : p.samples) {
    os << smp.s << "," << smp.xi.norm();
    for (Eigen::Index a = 0; a < d; ++a) os << "," << smp.xi[a];
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// collision direction

enum class CollisionSide { before, after };

struct DirectionOptions {
  double l_lo = 10.0;  // inner cutoff, in units of the deepest fitted delta
  double r_hi = 0.0;   // outer cutoff; 0 derives it from the outside bodies
  int min_nodes = 3;
  bool conic_pullback = true;  // pull node angles to the collision along the pair conic
};

// Direction estimate with its convergence diagnostic: spread is the largest
// angular deviation of a window node from the reported direction (after the
// conic pullback when that is active).
struct DirectionEstimate {
  Eigen::VectorXd u;
  double spread = 0.0;
  int window_nodes = 0;
  bool conic = false;
  double lambda_conic = 0.0;      // from the fitted two-body elements, conic mode only
  double pericenter_angle = 0.0;  // in-plane angle of the shared pericenter, conic mode only
};

inline void to_json(nlohmann::json& j, const DirectionEstimate& e) {
  std::vector<double> u(e.u.data(), e.u.data() + e.u.size());
  j = nlohmann::json{{"u", u},
                     {"spread", e.spread},
                     {"window_nodes", e.window_nodes},
                     {"conic", e.conic},
                     {"lambda_conic", e.lambda_conic},
                     {"pericenter_angle", e.pericenter_angle}};
}

// Unit vector lim (q_j - q_i)/|q_j - q_i| as t approaches the collision from
// the requested side, estimated from the deepest record inside the annulus
// [l_lo * delta_last, r_hi]. Node angles are pulled back to the collision
// along the fitted two-body orbit: the fitted energy and angular momentum
// give the pericenter by bisection, the polar sweep from the pericenter to
// each node radius by quadrature, and the remaining rotation between the
// pericenter and the collision direction is the half-sweep of the limit
// orbit at the conic's own lambda. Rectilinear windows (no angular momentum,
// no pericenter) fall back to the plain circular mean of node directions.
inline DirectionEstimate collision_direction(const WeakCriticalSequence& seq,
                                             const CollisionEvent& ev, CollisionSide side,
                                             const DirectionOptions& opt = {}) {
  if (ev.kind != CollisionKind::binary)
    throw InvalidArgument("collision_direction: only binary events have a pair direction");
  const CriticalPointRecord& rec = seq.records.back();
  const DiscretePath& p = rec.path;
  const MassSystem& sys = p.system;
  const int bi = ev.cluster[0], bj = ev.cluster[1];
  const double dlast = ev.delta_series.back().delta;
  const double t0 = ev.time;
  const double alpha = sys.alpha;
  const double msum = sys.masses[bi] + sys.masses[bj];
  const double eps = rec.eps;

  const double r_lo = opt.l_lo * dlast;
  double r_hi = opt.r_hi;
  if (!(r_hi > 0.0)) {
    if (sys.n_bodies() > 2) {
      // clearance to the nearest outside body at the collision instant
      const Config q0 = p.eval_at(t0);
      double outer = std::numeric_limits<double>::infinity();
      for (int o = 0; o < sys.n_bodies(); ++o) {
        if (o == bi || o == bj) continue;
        outer = std::min(outer, (q0.row(o) - q0.row(bi)).norm());
        outer = std::min(outer, (q0.row(o) - q0.row(bj)).norm());
      }
      r_hi = 0.1 * outer;
    } else {
      r_hi = 0.45 * detail::macro_separation(p, bi, bj);
    }
  }
  if (!(r_hi > r_lo))
    throw WindowEmpty("collision_direction: annulus [" + std::to_string(r_lo) + ", " +
                      std::to_string(r_hi) + "] is empty");

  std::vector<int> ks;
  for (int k = 1; k + 1 < p.m_nodes(); ++k) {
    const double t = p.time_at(k);
    if (side == CollisionSide::before && t >= t0) continue;
    if (side == CollisionSide::after && t <= t0) continue;
    const double r = detail::relative_at_node(p, bi, bj, k).norm();
    if (r >= r_lo && r <= r_hi) ks.push_back(k);
  }
  if (static_cast<int>(ks.size()) < opt.min_nodes)
    throw WindowEmpty("collision_direction: only " + std::to_string(ks.size()) +
                      " nodes in the annulus, need " + std::to_string(opt.min_nodes));

  DirectionEstimate est;
  est.window_nodes = static_cast<int>(ks.size());

  const detail::PairPlane plane = detail::pair_plane(p, bi, bj);

  const auto raw_mean = [&]() {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(sys.d);
    for (int k : ks) {
      const Eigen::VectorXd x = detail::relative_at_node(p, bi, bj, k);
      acc += x / x.norm();
    }
    const double nr = acc.norm();
    if (!(nr > 0.0))
      throw WindowEmpty("collision_direction: window directions cancel, no mean direction");
    est.u = acc / nr;
    est.spread = 0.0;
    for (int k : ks) {
      const Eigen::VectorXd x = detail::relative_at_node(p, bi, bj, k);
      const double c = std::clamp(est.u.dot(x) / x.norm(), -1.0, 1.0);
      est.spread = std::max(est.spread, std::acos(c));
    }
    est.conic = false;
  };

  if (!opt.conic_pullback || plane.degenerate || eps <= 0.0) {
    raw_mean();
    return est;
  }

  // fitted two-body elements over the window, per unit reduced mass
  double esum = 0.0, lsum = 0.0;
  std::vector<double> th(ks.size()), rs(ks.size());
  for (size_t q = 0; q < ks.size(); ++q) {
    const int k = ks[q];
    const Config vc =
        (p.nodes[static_cast<size_t>(k + 1)] - p.nodes[static_cast<size_t>(k - 1)]) /
        (2.0 * p.h());
    const Eigen::VectorXd x = detail::relative_at_node(p, bi, bj, k);
    const Eigen::VectorXd v = (vc.row(bj) - vc.row(bi)).transpose();
    const double r = x.norm();
    esum += 0.5 * v.squaredNorm() - msum * (std::pow(r, -alpha) + eps / (r * r));
    lsum += x.dot(plane.e1) * v.dot(plane.e2) - x.dot(plane.e2) * v.dot(plane.e1);
    th[q] = std::atan2(x.dot(plane.e2), x.dot(plane.e1));
    rs[q] = r;
  }
  const double er = esum / static_cast<double>(ks.size());
  const double ll = lsum / static_cast<double>(ks.size());
  const double kappa = ll * ll / (2.0 * msum * eps);
  if (!(kappa > 1.0 + 1e-9)) {
    raw_mean();  // no strong-force pericenter: head-on within resolution
    return est;
  }

  const auto rad = [&](double r) {
    return 2.0 * (er + msum * std::pow(r, -alpha) + msum * eps / (r * r)) - ll * ll / (r * r);
  };
  double blo = 1e-12, bhi = *std::min_element(rs.begin(), rs.end());
  if (rad(blo) >= 0.0) {
    raw_mean();
    return est;
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (blo + bhi);
    (rad(mid) < 0.0 ? blo : bhi) = mid;
  }
  const double rp = 0.5 * (blo + bhi);

  // polar sweep from the pericenter to radius r; rho = rp (1 + u^2) absorbs
  // the square-root singularity at the lower end
  const auto sweep = [&](double r) {
    const double umax = std::sqrt(std::max(0.0, r / rp - 1.0));
    const int nq = 4000;
    double acc = 0.0;
    for (int q = 0; q < nq; ++q) {
      const double u = umax * (q + 0.5) / nq, du = umax / nq;
      const double rho = rp * (1.0 + u * u);
      const double rv = std::max(rad(rho), 0.0);
      acc += (rv > 0.0 ? (std::abs(ll) / (rho * rho)) / std::sqrt(rv) * 2.0 * rp * u : 0.0) * du;
    }
    return acc;
  };

  const double sgn = ll >= 0.0 ? 1.0 : -1.0;
  std::vector<double> ps(ks.size());
  for (size_t q = 0; q < ks.size(); ++q) {
    const double phi = sweep(rs[q]);
    ps[q] = side == CollisionSide::before ? th[q] + sgn * phi : th[q] - sgn * phi;
  }
  const double pmean = detail::circular_mean(ps);
  est.spread = 0.0;
  for (double v : ps)
    est.spread = std::max(est.spread, std::abs(std::remainder(v - pmean, 2.0 * M_PI)));

  est.lambda_conic = 1.0 / (kappa - 1.0);
  est.pericenter_angle = pmean;
  // between the pericenter and the collision the orbit still turns by the
  // limit orbit's half-sweep at this lambda
  const double phi0 = M_PI * std::sqrt(1.0 + est.lambda_conic) / (2.0 - alpha);
  const double ang =
      side == CollisionSide::before ? pmean - sgn * phi0 : pmean + sgn * phi0;
  est.u = std::cos(ang) * plane.e1 + std::sin(ang) * plane.e2;
  est.conic = true;
  return est;
}

// ---------------------------------------------------------------------------
// rescaled second variation

// Compactly supported scalar profile with its derivative, applied along a
// fixed transverse direction. An empty direction picks the least-motion
// singular direction of the pair's relative track (d >= 3).
struct TransverseProfile {
  double support = 6.0;
  std::function<double(double)> value;
  std::function<double(double)> slope;
  Eigen::VectorXd direction;
};

// Quartic bump (1 - (s/S)^2)^2 on |s| < S: C^1, compact support, cheap.
inline TransverseProfile transverse_bump(double support) {
  if (!(support > 0.0)) throw InvalidArgument("transverse_bump: support must be positive");
  TransverseProfile pr;
  pr.support = support;
  pr.value = [support](double s) {
    const double w = s / support;
    const double g = 1.0 - w * w;
    return std::abs(w) < 1.0 ? g * g : 0.0;
  };
  pr.slope = [support](double s) {
    const double w = s / support;
    return std::abs(w) < 1.0 ? -4.0 * w * (1.0 - w * w) / support : 0.0;
  };
  return pr;
}

struct RescaledFormOptions {
  int tail = 4;             // records in the convergence verdict
  int quad_points = 20000;  // limit-form quadrature resolution
};

struct RescaledFormReport {
  std::vector<int> n_used;       // 1-based stages whose support fits the domain
  std::vector<double> values;    // rescaled discrete form per used stage
  std::vector<double> rel_diff;  // |value - limit_form| / |limit_form|
  std::vector<double> ds;        // rescaled grid spacing per used stage
  double limit_form = 0.0;
  double lambda_used = 0.0;
  bool tail_decreasing = false;
};

inline void to_json(nlohmann::json& j, const RescaledFormReport& r) {
  j = nlohmann::json{{"n_used", r.n_used},   {"values", r.values},
                     {"rel_diff", r.rel_diff}, {"ds", r.ds},
                     {"limit_form", r.limit_form}, {"lambda_used", r.lambda_used},
                     {"tail_decreasing", r.tail_decreasing}};
}

// Rescaled second variation along a transverse profile: for each stage the
// perturbation moves only the pair's relative coordinate by
// delta_n * phi(s(t)) * e, and the discrete form value
// delta_n^{-(2-alpha)/2} d2A[f, f] is summed segment by segment against the
// chord midpoints. The comparison value is m_i m_j times the transverse form
// of the limit orbit at the event's fitted lambda, integrated over the
// support. Stages whose support leaves the time domain are skipped; if none
// remains the support is too wide for this event.
inline RescaledFormReport restricted_quadform_convergence(const WeakCriticalSequence& seq,
                                                          const CollisionEvent& ev,
                                                          const TransverseProfile& profile,
                                                          const RescaledFormOptions& opt = {}) {
  if (ev.kind != CollisionKind::binary)
    throw InvalidArgument("restricted_quadform_convergence: only binary events");
  if (std::isinf(ev.lambda_fit))
    throw CaseMismatch("restricted_quadform_convergence: needs a finite-lambda event");
  if (ev.delta_series.size() != seq.records.size())
    throw InvalidArgument("restricted_quadform_convergence: event does not match the sequence");
  if (!profile.value || !profile.slope)
    throw InvalidArgument("restricted_quadform_convergence: profile callbacks are empty");

  const MassSystem& sys = seq.records.back().path.system;
  const int bi = ev.cluster[0], bj = ev.cluster[1];
  const double alpha = sys.alpha;
  const double mi = sys.masses[bi], mj = sys.masses[bj];
  const double mprod = mi * mj, msum = mi + mj, mred = mprod / msum;
  const double S = profile.support;

  Eigen::VectorXd e = profile.direction;
  if (e.size() == 0) {
    if (sys.d < 3)
      throw InvalidArgument(
          "restricted_quadform_convergence: automatic transverse direction needs d >= 3");
    Eigen::MatrixXd rel(seq.records.back().path.m_nodes(), sys.d);
    const DiscretePath& lp = seq.records.back().path;
    for (int k = 0; k < lp.m_nodes(); ++k)
      rel.row(k) = detail::relative_at_node(lp, bi, bj, k).transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(rel, Eigen::ComputeThinV);
    e = svd.matrixV().col(2);
  }
  if (e.size() != sys.d)
    throw InvalidArgument("restricted_quadform_convergence: direction has wrong dimension");
  const double en = e.norm();
  if (!(en > 0.0))
    throw InvalidArgument("restricted_quadform_convergence: zero direction");
  e /= en;

  RescaledFormReport rep;
  rep.lambda_used = ev.lambda_fit;

  for (size_t n = 0; n < seq.records.size(); ++n) {
    const DeltaRecord& dr = ev.delta_series[n];
    const DiscretePath& p = seq.records[n].path;
    const double w = std::pow(dr.delta, 1.0 + 0.5 * alpha);
    if (dr.t_star - S * w <= p.t1 || dr.t_star + S * w >= p.t2) continue;

    const double hh = p.h();
    double acc = 0.0;
    for (int k = 0; k + 1 < p.m_nodes(); ++k) {
      const double sa = (p.time_at(k) - dr.t_star) / w;
      const double sb = sa + hh / w;
      if (std::max(std::abs(sa), std::abs(sb)) > S + 1.0) continue;
      const double fa = dr.delta * profile.value(sa);
      const double fb = dr.delta * profile.value(sb);
      const double df = fb - fa, fm = 0.5 * (fa + fb);
      const Eigen::VectorXd xm = 0.5 * (detail::relative_at_node(p, bi, bj, k) +
                                        detail::relative_at_node(p, bi, bj, k + 1));
      const double r = xm.norm();
      const double xe = xm.dot(e) / r;
      // quadratic form of the pair Hessian along e: the xx^T rank-one part
      // vanishes for a genuinely transverse e but is kept for exactness
      const double quad_a =
          mprod * alpha * ((alpha + 2.0) * xe * xe - 1.0) * std::pow(r, -alpha - 2.0);
      const double quad_s = mprod * 2.0 * (4.0 * xe * xe - 1.0) / (r * r * r * r);
      acc += mred * df * df / hh + hh * fm * fm * (quad_a + dr.eps * quad_s);
    }
    rep.n_used.push_back(static_cast<int>(n) + 1);
    rep.values.push_back(std::pow(dr.delta, -0.5 * (2.0 - alpha)) * acc);
    rep.ds.push_back(hh / w);
  }
  if (rep.values.empty())
    throw SupportTooWide("restricted_quadform_convergence: support " + std::to_string(S) +
                         " leaves the time domain at every stage");

  // limit form over the zero-energy orbit at the fitted lambda
  const double s_need = S + 1.0;
  const LimitOrbit orbit = integrate_limit_orbit(alpha, ev.lambda_fit, msum, s_need, 2);
  double lim = 0.0;
  const int nq = opt.quad_points;
  for (int q = 0; q < nq; ++q) {
    const double s = -S + 2.0 * S * (q + 0.5) / nq, dsq = 2.0 * S / nq;
    const double r = orbit.radius_at(s);
    const double dphi = profile.slope(s), phi = profile.value(s);
    lim += dsq * (mred * dphi * dphi -
                  mprod * phi * phi *
                      (alpha * std::pow(r, -alpha - 2.0) + 2.0 * ev.lambda_fit / (r * r * r * r)));
  }
  rep.limit_form = lim;

  rep.rel_diff.resize(rep.values.size());
  const double scale = std::max(std::abs(lim), 1e-300);
  for (size_t q = 0; q < rep.values.size(); ++q)
    rep.rel_diff[q] = std::abs(rep.values[q] - lim) / scale;
  const size_t tail = std::min<size_t>(static_cast<size_t>(std::max(opt.tail, 1)),
                                       rep.rel_diff.size());
  rep.tail_decreasing = tail >= 2;
  for (size_t q = rep.rel_diff.size() - tail + 1; q < rep.rel_diff.size(); ++q)
    if (!(rep.rel_diff[q] <= rep.rel_diff[q - 1])) rep.tail_decreasing = false;
  return rep;
}

}  // namespace morsenb

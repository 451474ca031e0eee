#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "morsenb/potential.hpp"
#include "morsenb/system.hpp"

namespace morsenb {

inline constexpr double kCenterTol = 1e-9;

// Uniform-grid discrete H1 path: M node configurations on [t1,t2], linear
// in between, velocities read off forward differences. Endpoints are data,
// not unknowns; every node satisfies sum_i m_i q_i = 0.
struct DiscretePath {
  MassSystem system;
  double t1 = 0.0, t2 = 1.0;
  std::vector<Config> nodes;  // size M >= 3

  int m_nodes() const { return static_cast<int>(nodes.size()); }
  double h() const { return (t2 - t1) / (m_nodes() - 1); }
  double time_at(int k) const { return t1 + k * h(); }

  void validate() const {
    system.validate();
    if (!(t2 > t1)) throw InvalidArgument("DiscretePath: need t2 > t1");
    if (m_nodes() < 3) throw InvalidArgument("DiscretePath: need at least 3 nodes");
    const double scale = system.mass_sum();
    for (int k = 0; k < m_nodes(); ++k) {
      system.check_config(nodes[static_cast<size_t>(k)], "DiscretePath node");
      const double mom = system.moment(nodes[static_cast<size_t>(k)]).norm();
      if (mom > kCenterTol * std::max(1.0, scale))
        throw NotCentered("DiscretePath: node " + std::to_string(k) +
                          " has center-of-mass moment " + std::to_string(mom));
    }
  }

  // Piecewise-linear evaluation; t clamped to [t1,t2].
  Config eval_at(double t) const {
    const double hh = h();
    double u = (t - t1) / hh;
    u = std::clamp(u, 0.0, static_cast<double>(m_nodes() - 1));
    const int k = std::min(static_cast<int>(u), m_nodes() - 2);
    const double w = u - k;
    return (1.0 - w) * nodes[static_cast<size_t>(k)] + w * nodes[static_cast<size_t>(k + 1)];
  }

  Config segment_velocity(int k) const {
    return (nodes[static_cast<size_t>(k + 1)] - nodes[static_cast<size_t>(k)]) / h();
  }

  Config segment_midpoint(int k) const {
    return 0.5 * (nodes[static_cast<size_t>(k)] + nodes[static_cast<size_t>(k + 1)]);
  }
};

// Linear interpolation between centered endpoint configurations.
inline DiscretePath make_path_linear(const MassSystem& sys, const Config& qa, const Config& qb,
                                     double t1, double t2, int m) {
  sys.check_config(qa, "make_path endpoint a");
  sys.check_config(qb, "make_path endpoint b");
  if (m < 3) throw InvalidArgument("make_path: need M >= 3");
  if (!(t2 > t1)) throw InvalidArgument("make_path: need t2 > t1");
  const double scale = std::max(1.0, sys.mass_sum());
  if (sys.moment(qa).norm() > kCenterTol * scale || sys.moment(qb).norm() > kCenterTol * scale)
    throw NotCentered("make_path: endpoints must have zero center-of-mass moment");
  DiscretePath p;
  p.system = sys;
  p.t1 = t1;
  p.t2 = t2;
  p.nodes.resize(static_cast<size_t>(m));
  for (int k = 0; k < m; ++k) {
    const double w = static_cast<double>(k) / (m - 1);
    Config q = (1.0 - w) * qa + w * qb;
    // interpolation of centered nodes is centered; kill rounding anyway
    const Eigen::RowVectorXd mom = sys.moment(q) / sys.mass_sum();
    q.rowwise() -= mom;
    p.nodes[static_cast<size_t>(k)] = std::move(q);
  }
  return p;
}

// Build from explicit node data (stored verbatim after the centering check).
inline DiscretePath make_path_seeded(const MassSystem& sys, std::vector<Config> nodes,
                                     double t1, double t2) {
  DiscretePath p;
  p.system = sys;
  p.t1 = t1;
  p.t2 = t2;
  p.nodes = std::move(nodes);
  p.validate();
  return p;
}

// Mass-weighted discrete H1 inner product of two node arrays on the same
// grid: sum over segments of h * <udot, vdot>_m plus the trapezoid rule for
// h * <u, v>_m.
inline double h1_inner(const DiscretePath& grid, const std::vector<Config>& u,
                       const std::vector<Config>& v) {
  const auto m = static_cast<size_t>(grid.m_nodes());
  if (u.size() != m || v.size() != m)
    throw InvalidArgument("h1_inner: node arrays must match the grid");
  const double hh = grid.h();
  const Eigen::VectorXd& w = grid.system.masses;
  auto dot_m = [&](const Config& a, const Config& b) {
    double s = 0.0;
    for (int i = 0; i < grid.system.n_bodies(); ++i) s += w[i] * a.row(i).dot(b.row(i));
    return s;
  };
  double acc = 0.0;
  for (size_t k = 0; k + 1 < m; ++k)
    acc += dot_m(u[k + 1] - u[k], v[k + 1] - v[k]) / hh;
  for (size_t k = 0; k < m; ++k) {
    const double wk = (k == 0 || k + 1 == m) ? 0.5 * hh : hh;
    acc += wk * dot_m(u[k], v[k]);
  }
  return acc;
}

inline double h1_norm(const DiscretePath& grid, const std::vector<Config>& u) {
  return std::sqrt(h1_inner(grid, u, u));
}

struct SeparationEvent {
  double delta = std::numeric_limits<double>::infinity();
  double t_star = 0.0;
  int body_i = -1, body_j = -1;
  int node = -1;  // grid node nearest the minimum
};

inline void to_json(nlohmann::json& j, const SeparationEvent& e) {
  j = nlohmann::json{{"delta", e.delta}, {"t_star", e.t_star}, {"body_i", e.body_i},
                     {"body_j", e.body_j}, {"node", e.node}};
}

inline void from_json(const nlohmann::json& j, SeparationEvent& e) {
  e.delta = j.at("delta").get<double>();
  e.t_star = j.at("t_star").get<double>();
  e.body_i = j.at("body_i").get<int>();
  e.body_j = j.at("body_j").get<int>();
  e.node = j.at("node").get<int>();
}

// Minimum separation of one body pair over a time window, refined by fitting
// a parabola to the squared distance at the three nodes around the grid
// minimum. Ties resolve to the earliest time.
inline SeparationEvent pair_separation(const DiscretePath& path, int i, int j,
                                       double ta, double tb) {
  const int n = path.system.n_bodies();
  if (i < 0 || j < 0 || i >= n || j >= n || i == j)
    throw InvalidArgument("pair_separation: bad body pair");
  if (!(tb >= ta)) throw InvalidArgument("pair_separation: empty window");
  const int m = path.m_nodes();
  const double hh = path.h();
  const int k_lo = std::max(0, static_cast<int>(std::ceil((ta - path.t1) / hh - 1e-12)));
  const int k_hi = std::min(m - 1, static_cast<int>(std::floor((tb - path.t1) / hh + 1e-12)));
  if (k_lo > k_hi) throw InvalidArgument("pair_separation: window contains no nodes");

  // locate the grid minimum of this pair's distance
  double dmin = std::numeric_limits<double>::infinity();
  int kmin = k_lo;
  for (int k = k_lo; k <= k_hi; ++k) {
    const double dk = pair_distance(path.nodes[static_cast<size_t>(k)], i, j);
    if (dk < dmin) {  // strict: ties keep the earliest node
      dmin = dk;
      kmin = k;
    }
  }
  SeparationEvent ev;
  ev.body_i = std::min(i, j);
  ev.body_j = std::max(i, j);
  ev.node = kmin;
  ev.t_star = path.time_at(kmin);
  ev.delta = dmin;
  if (kmin > k_lo && kmin < k_hi) {
    // parabola through the squared distances at the three inner nodes;
    // squared distance of a linear-in-t path is exactly quadratic
    auto d2 = [&](int k) {
      const double dd = pair_distance(path.nodes[static_cast<size_t>(k)], i, j);
      return dd * dd;
    };
    const double f0 = d2(kmin - 1), f1 = d2(kmin), f2 = d2(kmin + 1);
    const double denom = f0 - 2.0 * f1 + f2;
    if (denom > 0.0) {
      double off = 0.5 * (f0 - f2) / denom;  // in units of h from kmin
      off = std::clamp(off, -1.0, 1.0);
      const double fits = f1 + 0.5 * off * (f2 - f0) + 0.5 * off * off * denom;
      if (fits >= 0.0 && fits <= f1) {
        ev.t_star = path.time_at(kmin) + off * hh;
        ev.delta = std::sqrt(fits);
      }
    }
  }
  return ev;
}

inline SeparationEvent pair_separation(const DiscretePath& path, int i, int j) {
  return pair_separation(path, i, j, path.t1, path.t2);
}

// Every pair's separation event, pairs in lexicographic order.
inline std::vector<SeparationEvent> all_pair_separations(const DiscretePath& path,
                                                         double ta, double tb) {
  std::vector<SeparationEvent> out;
  const int n = path.system.n_bodies();
  out.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.push_back(pair_separation(path, i, j, ta, tb));
  return out;
}

inline std::vector<SeparationEvent> all_pair_separations(const DiscretePath& path) {
  return all_pair_separations(path, path.t1, path.t2);
}

// Minimum pair separation over a time window, all pairs considered.
inline SeparationEvent min_pair_separation(const DiscretePath& path, double ta, double tb) {
  if (!(tb >= ta)) throw InvalidArgument("min_pair_separation: empty window");
  SeparationEvent best;
  for (const SeparationEvent& ev : all_pair_separations(path, ta, tb)) {
    const bool better =
        ev.delta < best.delta || (ev.delta == best.delta && ev.t_star < best.t_star);
    if (better) best = ev;
  }
  return best;
}

inline SeparationEvent min_pair_separation(const DiscretePath& path) {
  return min_pair_separation(path, path.t1, path.t2);
}

inline void to_json(nlohmann::json& j, const DiscretePath& p) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& q : p.nodes) nodes.push_back(config_to_json(q));
  j = nlohmann::json{{"t1", p.t1}, {"t2", p.t2}, {"M", p.m_nodes()},
                     {"system", p.system}, {"nodes", std::move(nodes)}};
}

inline void from_json(const nlohmann::json& j, DiscretePath& p) {
  p.system = j.at("system").get<MassSystem>();
  p.t1 = j.at("t1").get<double>();
  p.t2 = j.at("t2").get<double>();
  const auto& nodes = j.at("nodes");
  const int m = j.at("M").get<int>();
  if (!nodes.is_array() || static_cast<int>(nodes.size()) != m)
    throw ParseError("DiscretePath: node count does not match M");
  p.nodes.clear();
  p.nodes.reserve(nodes.size());
  for (const auto& nj : nodes) p.nodes.push_back(config_from_json(nj));
  p.validate();
}

// Long-format CSV: t,body,x1,...,xd.
inline void write_path_csv(const DiscretePath& p, std::ostream& os) {
  os << "t,body";
  for (int a = 0; a < p.system.d; ++a) os << ",x" << (a + 1);
  os << "\n";
  os.precision(17);
  for (int k = 0; k < p.m_nodes(); ++k)
    for (int i = 0; i < p.system.n_bodies(); ++i) {
      os << p.time_at(k) << "," << i;
      for (int a = 0; a < p.system.d; ++a) os << "," << p.nodes[static_cast<size_t>(k)](i, a);
      os << "\n";
    }
}

}  // namespace morsenb

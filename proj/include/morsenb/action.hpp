#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "morsenb/centered_basis.hpp"
#include "morsenb/path.hpp"
#include "morsenb/potential.hpp"

namespace morsenb {

struct ActionValue {
  double total = 0.0;
  double kinetic = 0.0;
  double weak_pot = 0.0;    // time integral of the weak-force sum
  double strong_pot = 0.0;  // time integral of the strong-force sum, without eps
  double eps = 0.0;
};

inline void to_json(nlohmann::json& j, const ActionValue& a) {
  j = nlohmann::json{{"total", a.total}, {"kinetic", a.kinetic}, {"weak_pot", a.weak_pot},
                     {"strong_pot", a.strong_pot}, {"eps", a.eps}};
}

inline void from_json(const nlohmann::json& j, ActionValue& a) {
  a.total = j.at("total").get<double>();
  a.kinetic = j.at("kinetic").get<double>();
  a.weak_pot = j.at("weak_pot").get<double>();
  a.strong_pot = j.at("strong_pot").get<double>();
  a.eps = j.at("eps").get<double>();
}

// Kinetic part is exact for the piecewise-linear interpolant; the potential
// integrals use the segment midpoint rule.
inline ActionValue action_value(const DiscretePath& path, double eps) {
  ActionValue av;
  av.eps = eps;
  const double hh = path.h();
  const Eigen::VectorXd& m = path.system.masses;
  try {
    for (int k = 0; k + 1 < path.m_nodes(); ++k) {
      const Config dq = path.nodes[static_cast<size_t>(k + 1)] - path.nodes[static_cast<size_t>(k)];
      double kin = 0.0;
      for (int i = 0; i < path.system.n_bodies(); ++i) kin += m[i] * dq.row(i).squaredNorm();
      av.kinetic += 0.5 * kin / hh;
      const Config mid = path.segment_midpoint(k);
      av.weak_pot += hh * potential_weak(path.system, mid);
      av.strong_pot += hh * potential_strong(path.system, mid);
    }
  } catch (const CollisionConfiguration& e) {
    throw InfiniteAction(std::string("action_value: quadrature point at the distance floor (") +
                         e.what() + ")");
  }
  av.total = av.kinetic + av.weak_pot + eps * av.strong_pot;
  return av;
}

// Fixed-endpoint action functional on the interior nodes of a uniform grid,
// in reduced (center-of-mass-free, mass-orthonormal) coordinates. This is
// the object the solvers and the spectral code consume: a plain smooth
// function of one flat vector, together with the discrete H1 Gram matrix.
class ActionProblem {
 public:
  ActionProblem(MassSystem sys, Config qa, Config qb, double t1, double t2, int m, double eps)
      : sys_(std::move(sys)),
        rb_(sys_),
        eps_(eps),
        t1_(t1),
        t2_(t2),
        m_(m) {
    sys_.check_config(qa, "ActionProblem endpoint a");
    sys_.check_config(qb, "ActionProblem endpoint b");
    if (m_ < 3) throw InvalidArgument("ActionProblem: need M >= 3");
    if (!(t2_ > t1_)) throw InvalidArgument("ActionProblem: need t2 > t1");
    const double scale = std::max(1.0, sys_.mass_sum());
    if (sys_.moment(qa).norm() > kCenterTol * scale || sys_.moment(qb).norm() > kCenterTol * scale)
      throw NotCentered("ActionProblem: endpoints must be centered");
    ya_ = rb_.reduce(qa);
    yb_ = rb_.reduce(qb);
    lift_ = rb_.lift_matrix();
    build_gram();
  }

  static ActionProblem from_path(const DiscretePath& p, double eps) {
    return ActionProblem(p.system, p.nodes.front(), p.nodes.back(), p.t1, p.t2, p.m_nodes(), eps);
  }

  const MassSystem& system() const { return sys_; }
  const ReducedBasis& basis() const { return rb_; }
  double eps() const { return eps_; }
  void set_eps(double eps) { eps_ = eps; }
  double t1() const { return t1_; }
  double t2() const { return t2_; }
  int m_nodes() const { return m_; }
  int n_interior() const { return m_ - 2; }
  double h() const { return (t2_ - t1_) / (m_ - 1); }
  int block() const { return rb_.dim(); }
  int dim() const { return n_interior() * block(); }

  DiscretePath path_from_interior(const Eigen::VectorXd& y) const {
    if (y.size() != dim()) throw InvalidArgument("ActionProblem: interior vector size mismatch");
    DiscretePath p;
    p.system = sys_;
    p.t1 = t1_;
    p.t2 = t2_;
    p.nodes.resize(static_cast<size_t>(m_));
    p.nodes.front() = rb_.lift(ya_);
    p.nodes.back() = rb_.lift(yb_);
    for (int k = 1; k + 1 < m_; ++k)
      p.nodes[static_cast<size_t>(k)] = rb_.lift(y.segment((k - 1) * block(), block()));
    return p;
  }

  Eigen::VectorXd interior_from_path(const DiscretePath& p) const {
    if (p.m_nodes() != m_) throw InvalidArgument("ActionProblem: path grid mismatch");
    Eigen::VectorXd y(dim());
    for (int k = 1; k + 1 < m_; ++k)
      y.segment((k - 1) * block(), block()) = rb_.reduce(p.nodes[static_cast<size_t>(k)]);
    return y;
  }

  double value(const Eigen::VectorXd& y) const {
    return action_value(path_from_interior(y), eps_).total;
  }

  ActionValue parts(const Eigen::VectorXd& y) const {
    return action_value(path_from_interior(y), eps_);
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& y) const {
    const DiscretePath p = path_from_interior(y);
    const double hh = h();
    const int b = block();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    // kinetic part: tridiagonal difference stencil in reduced coordinates
    std::vector<Eigen::VectorXd> yr(static_cast<size_t>(m_));
    yr.front() = ya_;
    yr.back() = yb_;
    for (int k = 1; k + 1 < m_; ++k) yr[static_cast<size_t>(k)] = y.segment((k - 1) * b, b);
    for (int k = 1; k + 1 < m_; ++k)
      g.segment((k - 1) * b, b) =
          (2.0 * yr[static_cast<size_t>(k)] - yr[static_cast<size_t>(k - 1)] - yr[static_cast<size_t>(k + 1)]) / hh;
    // potential part via the two incident segment midpoints
    try {
      for (int k = 0; k + 1 < m_; ++k) {
        const Config gm = grad_potential(sys_, p.segment_midpoint(k), eps_);
        const Eigen::VectorXd gr = rb_.pull_gradient(gm) * (0.5 * hh);
        if (k >= 1) g.segment((k - 1) * b, b) += gr;
        if (k + 1 <= m_ - 2) g.segment(k * b, b) += gr;
      }
    } catch (const CollisionConfiguration& e) {
      throw InfiniteAction(std::string("gradient: quadrature point at the distance floor (") + e.what() + ")");
    }
    return g;
  }

  // Dense block-tridiagonal Hessian over the interior nodes.
  Eigen::MatrixXd hessian(const Eigen::VectorXd& y) const {
    const DiscretePath p = path_from_interior(y);
    const double hh = h();
    const int b = block();
    Eigen::MatrixXd hmat = Eigen::MatrixXd::Zero(dim(), dim());
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(b, b);
    for (int k = 1; k + 1 < m_; ++k) {
      hmat.block((k - 1) * b, (k - 1) * b, b, b) += (2.0 / hh) * id;
      if (k + 1 <= m_ - 2) {
        hmat.block((k - 1) * b, k * b, b, b) -= id / hh;
        hmat.block(k * b, (k - 1) * b, b, b) -= id / hh;
      }
    }
    try {
      for (int k = 0; k + 1 < m_; ++k) {
        const Eigen::MatrixXd hq = hessian_dense(sys_, p.segment_midpoint(k), eps_);
        const Eigen::MatrixXd hr = (lift_.transpose() * hq * lift_) * (0.25 * hh);
        const int kl = k - 1, kr = k;  // interior indices touching this segment
        if (kl >= 0) hmat.block(kl * b, kl * b, b, b) += hr;
        if (kr <= m_ - 3) hmat.block(kr * b, kr * b, b, b) += hr;
        if (kl >= 0 && kr <= m_ - 3) {
          hmat.block(kl * b, kr * b, b, b) += hr;
          hmat.block(kr * b, kl * b, b, b) += hr;
        }
      }
    } catch (const CollisionConfiguration& e) {
      throw InfiniteAction(std::string("hessian: quadrature point at the distance floor (") + e.what() + ")");
    }
    return hmat;
  }

  // Discrete H1 Gram over interior nodes (the norm used for residuals,
  // preconditioning and Morse-index normalization).
  const Eigen::MatrixXd& gram() const { return gram_; }
  const Eigen::LLT<Eigen::MatrixXd>& gram_llt() const { return gram_llt_; }

  double residual_h1(const Eigen::VectorXd& g) const {
    return std::sqrt(g.dot(gram_llt_.solve(g)));
  }

 private:
  void build_gram() {
    const double hh = h();
    const int b = block();
    gram_ = Eigen::MatrixXd::Zero(dim(), dim());
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(b, b);
    for (int k = 1; k + 1 < m_; ++k) {
      gram_.block((k - 1) * b, (k - 1) * b, b, b) = (2.0 / hh + hh) * id;
      if (k + 1 <= m_ - 2) {
        gram_.block((k - 1) * b, k * b, b, b) = -id / hh;
        gram_.block(k * b, (k - 1) * b, b, b) = -id / hh;
      }
    }
    gram_llt_.compute(gram_);
    if (gram_llt_.info() != Eigen::Success)
      throw Error("ActionProblem: H1 Gram factorization failed");
  }

  MassSystem sys_;
  ReducedBasis rb_;
  double eps_;
  double t1_, t2_;
  int m_;
  Eigen::VectorXd ya_, yb_;
  Eigen::MatrixXd lift_;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> gram_llt_;
};

}  // namespace morsenb

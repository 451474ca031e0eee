#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "morsenb/system.hpp"

namespace morsenb {

inline double pair_distance(const Config& q, int i, int j) {
  return (q.row(i) - q.row(j)).norm();
}

inline void check_floor(double r, int i, int j) {
  if (!(r >= kDistanceFloor))
    throw CollisionConfiguration("pair (" + std::to_string(i) + "," + std::to_string(j) +
                                 ") at distance " + std::to_string(r) + " below the floor");
}

// U(q) = sum_{i<j} m_i m_j / r_ij^alpha
inline double potential_weak(const MassSystem& sys, const Config& q) {
  sys.check_config(q, "potential_weak");
  double u = 0.0;
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int j = i + 1; j < sys.n_bodies(); ++j) {
      const double r = pair_distance(q, i, j);
      check_floor(r, i, j);
      u += sys.masses[i] * sys.masses[j] * std::pow(r, -sys.alpha);
    }
  return u;
}

// Ustrong(q) = sum_{i<j} m_i m_j / r_ij^2
inline double potential_strong(const MassSystem& sys, const Config& q) {
  sys.check_config(q, "potential_strong");
  double u = 0.0;
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int j = i + 1; j < sys.n_bodies(); ++j) {
      const double r = pair_distance(q, i, j);
      check_floor(r, i, j);
      u += sys.masses[i] * sys.masses[j] / (r * r);
    }
  return u;
}

// Gradient of U + eps * Ustrong with respect to body positions, as an N x d
// matrix. This is the force side of the motion equation m_i qdd_i = dU/dq_i.
inline Config grad_potential(const MassSystem& sys, const Config& q, double eps) {
  sys.check_config(q, "grad_potential");
  Config g = Config::Zero(q.rows(), q.cols());
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int j = i + 1; j < sys.n_bodies(); ++j) {
      const Eigen::RowVectorXd x = q.row(i) - q.row(j);
      const double r = x.norm();
      check_floor(r, i, j);
      const double c = sys.masses[i] * sys.masses[j];
      // d/dx of c r^-beta is -c beta r^(-beta-2) x, for each of the two terms
      double coef = -c * sys.alpha * std::pow(r, -sys.alpha - 2.0);
      if (eps != 0.0) coef += -c * eps * 2.0 * std::pow(r, -4.0);
      g.row(i) += coef * x;
      g.row(j) -= coef * x;
    }
  return g;
}

namespace detail {

// Hessian of the single pair term c r^-beta in the relative coordinate x.
inline Eigen::MatrixXd pair_hessian_block(const Eigen::RowVectorXd& x, double r, double c, double beta) {
  const Eigen::MatrixXd xxT = x.transpose() * x;
  return c * beta * (beta + 2.0) * std::pow(r, -beta - 4.0) * xxT -
         c * beta * std::pow(r, -beta - 2.0) * Eigen::MatrixXd::Identity(x.cols(), x.cols());
}

}  // namespace detail

// Apply the second derivative of U + eps * Ustrong at q to a direction v
// (same N x d shape), without forming the full matrix.
inline Config hessian_apply(const MassSystem& sys, const Config& q, double eps, const Config& v) {
  sys.check_config(q, "hessian_apply");
  sys.check_config(v, "hessian_apply direction");
  Config out = Config::Zero(q.rows(), q.cols());
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int j = i + 1; j < sys.n_bodies(); ++j) {
      const Eigen::RowVectorXd x = q.row(i) - q.row(j);
      const double r = x.norm();
      check_floor(r, i, j);
      const double c = sys.masses[i] * sys.masses[j];
      Eigen::MatrixXd blk = detail::pair_hessian_block(x, r, c, sys.alpha);
      if (eps != 0.0) blk += eps * detail::pair_hessian_block(x, r, c, 2.0);
      const Eigen::RowVectorXd dv = v.row(i) - v.row(j);
      const Eigen::RowVectorXd bdv = dv * blk.transpose();  // blk is symmetric
      out.row(i) += bdv;
      out.row(j) -= bdv;
    }
  return out;
}

// Dense (N d) x (N d) Hessian in body-major coordinate order.
inline Eigen::MatrixXd hessian_dense(const MassSystem& sys, const Config& q, double eps) {
  sys.check_config(q, "hessian_dense");
  const int n = sys.n_bodies(), d = sys.d;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n * d, n * d);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const Eigen::RowVectorXd x = q.row(i) - q.row(j);
      const double r = x.norm();
      check_floor(r, i, j);
      const double c = sys.masses[i] * sys.masses[j];
      Eigen::MatrixXd blk = detail::pair_hessian_block(x, r, c, sys.alpha);
      if (eps != 0.0) blk += eps * detail::pair_hessian_block(x, r, c, 2.0);
      h.block(i * d, i * d, d, d) += blk;
      h.block(j * d, j * d, d, d) += blk;
      h.block(i * d, j * d, d, d) -= blk;
      h.block(j * d, i * d, d, d) -= blk;
    }
  return h;
}

// Pairwise sums restricted to a cluster (both bodies inside) or to the cut
// (exactly one body inside). Together with the complement these partition
// the full sum: U = U_I + U_I' + U_cross.
enum class PairScope { within, cross };

inline double potential_weak_scoped(const MassSystem& sys, const Config& q,
                                    const std::vector<int>& cluster, PairScope scope) {
  sys.check_config(q, "potential_weak_scoped");
  std::vector<char> in(static_cast<size_t>(sys.n_bodies()), 0);
  for (int i : cluster) in.at(static_cast<size_t>(i)) = 1;
  double u = 0.0;
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int j = i + 1; j < sys.n_bodies(); ++j) {
      const bool take = scope == PairScope::within ? (in[i] && in[j]) : (in[i] != in[j]);
      if (!take) continue;
      const double r = pair_distance(q, i, j);
      check_floor(r, i, j);
      u += sys.masses[i] * sys.masses[j] * std::pow(r, -sys.alpha);
    }
  return u;
}

inline double potential_strong_scoped(const MassSystem& sys, const Config& q,
                                      const std::vector<int>& cluster, PairScope scope) {
  sys.check_config(q, "potential_strong_scoped");
  std::vector<char> in(static_cast<size_t>(sys.n_bodies()), 0);
  for (int i : cluster) in.at(static_cast<size_t>(i)) = 1;
  double u = 0.0;
  for (int i = 0; i < sys.n_bodies(); ++i)
    for (int j = i + 1; j < sys.n_bodies(); ++j) {
      const bool take = scope == PairScope::within ? (in[i] && in[j]) : (in[i] != in[j]);
      if (!take) continue;
      const double r = pair_distance(q, i, j);
      check_floor(r, i, j);
      u += sys.masses[i] * sys.masses[j] / (r * r);
    }
  return u;
}

}  // namespace morsenb

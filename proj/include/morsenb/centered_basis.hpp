#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "morsenb/system.hpp"

namespace morsenb {

// Coordinates on the center-of-mass-free subspace. Columns of W span
// { w in R^N : sum_i m_i w_i = 0 } and are orthonormal in the mass inner
// product, so q = W Y identifies centered configurations with unconstrained
// (N-1) x d blocks and turns the kinetic form into the plain Frobenius one.
struct ReducedBasis {
  Eigen::MatrixXd W;       // N x (N-1)
  Eigen::VectorXd masses;  // N
  int d = 0;

  ReducedBasis() = default;
  ReducedBasis(const MassSystem& sys) : masses(sys.masses), d(sys.d) {
    const int n = sys.n_bodies();
    Eigen::VectorXd mu = masses.array().sqrt();
    Eigen::VectorXd u = mu / mu.norm();
    // Householder reflector taking e_1 to u; its trailing columns are an
    // orthonormal basis of the complement of u.
    Eigen::VectorXd w = u;
    w[0] += (u[0] >= 0.0 ? 1.0 : -1.0);
    w.normalize();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n) - 2.0 * w * w.transpose();
    Eigen::MatrixXd v = h.rightCols(n - 1);
    W = mu.cwiseInverse().asDiagonal() * v;
  }

  int n_bodies() const { return static_cast<int>(masses.size()); }
  int n_reduced() const { return n_bodies() - 1; }
  int dim() const { return n_reduced() * d; }

  // Y = W^T M q, flattened row-major.
  Eigen::VectorXd reduce(const Config& q) const {
    Eigen::MatrixXd y = W.transpose() * masses.asDiagonal() * q;
    Eigen::VectorXd out(dim());
    for (int r = 0; r < n_reduced(); ++r)
      for (int a = 0; a < d; ++a) out[r * d + a] = y(r, a);
    return out;
  }

  Config lift(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd ym(n_reduced(), d);
    for (int r = 0; r < n_reduced(); ++r)
      for (int a = 0; a < d; ++a) ym(r, a) = y[r * d + a];
    return W * ym;
  }

  // Full-coordinate lift matrix L (Nd x (N-1)d, body-major rows) so that
  // reduced quadratic forms are L^T H L.
  Eigen::MatrixXd lift_matrix() const {
    const int n = n_bodies();
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n * d, dim());
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < n_reduced(); ++r)
        for (int a = 0; a < d; ++a) l(i * d + a, r * d + a) = W(i, r);
    return l;
  }

  // Gradient pullback: if g is dF/dq (N x d), the reduced gradient of
  // F(W Y) is W^T g.
  Eigen::VectorXd pull_gradient(const Config& g) const {
    Eigen::MatrixXd y = W.transpose() * g;
    Eigen::VectorXd out(dim());
    for (int r = 0; r < n_reduced(); ++r)
      for (int a = 0; a < d; ++a) out[r * d + a] = y(r, a);
    return out;
  }
};

}  // namespace morsenb

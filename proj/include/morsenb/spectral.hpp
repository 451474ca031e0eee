#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "morsenb/errors.hpp"

namespace morsenb {

inline constexpr int kDenseSpectralLimit = 3000;

struct SpectralReport {
  Eigen::VectorXd eigenvalues;  // generalized eigenvalues of (H, B), ascending
  int num_negative = 0;         // mu < -ztol
  int num_zero = 0;             // |mu| <= ztol, reported but never counted
  double ztol = 0.0;
  double residual_max = 0.0;  // max relative eigenpair residual
  int dim = 0;
};

// Signature of H restricted against the SPD Gram B: solves H v = mu B v
// densely and counts eigenvalues below the zero band. The band half-width is
// ztol_rel times the infinity norm of H, so near-zero modes (for example the
// ones generated by a continuous symmetry) are reported separately instead
// of polluting the count.
inline SpectralReport morse_index(const Eigen::MatrixXd& h, const Eigen::MatrixXd& b,
                                  double ztol_rel = 1e-9) {
  if (h.rows() != h.cols() || b.rows() != b.cols() || h.rows() != b.rows())
    throw InvalidArgument("morse_index: H and B must be square and of equal size");
  if (h.rows() > kDenseSpectralLimit)
    throw DimensionTooLarge("morse_index: dense solve limited to dimension " +
                            std::to_string(kDenseSpectralLimit) + ", got " + std::to_string(h.rows()));
  SpectralReport rep;
  rep.dim = static_cast<int>(h.rows());
  const double hscale = h.cwiseAbs().rowwise().sum().maxCoeff();
  const double bscale = b.cwiseAbs().rowwise().sum().maxCoeff();
  rep.ztol = ztol_rel * (hscale > 0.0 ? hscale : 1.0);

  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(h, b);
  if (es.info() != Eigen::Success) throw Error("morse_index: generalized eigensolve failed");
  rep.eigenvalues = es.eigenvalues();
  const Eigen::MatrixXd& v = es.eigenvectors();

  Eigen::MatrixXd resid = h * v - b * v * rep.eigenvalues.asDiagonal();
  for (int c = 0; c < rep.eigenvalues.size(); ++c) {
    const double mu = rep.eigenvalues[c];
    const double scale = hscale + std::abs(mu) * bscale + 1.0;
    rep.residual_max = std::max(rep.residual_max, resid.col(c).norm() / (v.col(c).norm() * scale));
    if (mu < -rep.ztol)
      ++rep.num_negative;
    else if (mu <= rep.ztol)
      ++rep.num_zero;
  }
  return rep;
}

// Negative/zero/positive inertia of a symmetric matrix by LDLT. By Sylvester
// inertia this must agree with the generalized count for any SPD Gram.
struct Inertia {
  int negative = 0, zero = 0, positive = 0;
};

inline Inertia symmetric_inertia(const Eigen::MatrixXd& a, double ztol = 0.0) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  Inertia in;
  const Eigen::VectorXd d = ldlt.vectorD();
  for (int i = 0; i < d.size(); ++i) {
    if (d[i] < -ztol)
      ++in.negative;
    else if (d[i] <= ztol)
      ++in.zero;
    else
      ++in.positive;
  }
  return in;
}

// Negative count of a symmetric tridiagonal matrix by the LDL^T pivot
// recurrence, O(n) and fill-in free, for 1-D discretizations too large for
// the dense path. diag holds the n diagonal entries, off the n-1
// subdiagonal ones. An exactly singular leading pivot is nudged off zero;
// the dense cross-checks in the test suite bound the effect.
inline int tridiagonal_negative_count(const Eigen::VectorXd& diag, const Eigen::VectorXd& off) {
  const Eigen::Index n = diag.size();
  if (n == 0) return 0;
  if (off.size() != n - 1)
    throw InvalidArgument("tridiagonal_negative_count: off-diagonal must have size n-1");
  const double scale = std::max(diag.cwiseAbs().maxCoeff(),
                                n > 1 ? off.cwiseAbs().maxCoeff() : 0.0);
  const double tiny = 1e-300 + 1e-30 * scale;
  int count = 0;
  double d = diag[0];
  for (Eigen::Index i = 0;; ++i) {
    if (std::abs(d) < tiny) d = tiny;
    if (d < 0.0) ++count;
    if (i == n - 1) break;
    d = diag[i + 1] - off[i] * off[i] / d;
  }
  return count;
}

}  // namespace morsenb

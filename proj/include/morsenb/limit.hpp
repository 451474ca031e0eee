#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "morsenb/errors.hpp"
#include "morsenb/spectral.hpp"

namespace morsenb {

inline constexpr double kLambdaInfinity = std::numeric_limits<double>::infinity();

namespace detail {

inline void check_alpha_lambda(double alpha, double lambda, bool allow_infinite) {
  if (!(alpha > 0.0) || !(alpha < 2.0))
    throw InvalidArgument("alpha must lie in the open interval (0, 2)");
  if (std::isinf(lambda) && lambda > 0.0) {
    if (allow_infinite) return;
    throw InvalidArgument("lambda must be finite here");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw InvalidArgument("lambda must be >= 0");
}

}  // namespace detail

// max{k in Z : k < 2 sqrt(1+lambda)/(2-alpha)}
inline int index_i_lambda(double alpha, double lambda) {
  detail::check_alpha_lambda(alpha, lambda, false);
  const double x = 2.0 * std::sqrt(1.0 + lambda) / (2.0 - alpha);
  double k = std::floor(x);
  if (k == x) k -= 1.0;  // the inequality is strict
  return static_cast<int>(k);
}

inline int index_i(double alpha) { return index_i_lambda(alpha, 0.0); }

// One state sample of an integrated limit orbit. theta is the polar angle in
// the orbit plane, unwrapped across samples (monotone increasing in s).
struct OrbitSample {
  double s = 0.0;
  Eigen::VectorXd pos;
  Eigen::VectorXd vel;
  double theta = 0.0;
};

// Zero-energy central-force orbit through pericenter |q(0)| = 1 with
// perpendicular start, integrated over [-s_max, s_max]. For finite lambda the
// force is -alpha q/r^{alpha+2} - 2 lambda q/r^4 (times the mass sum); the
// infinite-lambda problem drops the alpha term and fixes the speed by
// |q'|^2 = 2M/r^2, which pins the orbit to the unit circle.
struct LimitOrbit {
  double alpha = 1.0;
  double lambda = 0.0;  // may be +infinity
  double mass_sum = 1.0;
  int d = 2;
  double pericenter_norm = 1.0;
  std::vector<OrbitSample> samples;  // ascending in s, covering [-s_max, s_max]
  Eigen::VectorXd e1, e2;            // orthonormal basis of the orbit plane
  Eigen::VectorXd u_minus, u_plus;   // asymptotic directions (tail-corrected for finite lambda)
  double swept_angle = 0.0;          // theta(s_max) - theta(-s_max)
  double energy_residual = 0.0;      // max over samples of the zero-energy defect
  double planarity_residual = 0.0;   // max out-of-plane position component

  double s_lo() const { return samples.front().s; }
  double s_hi() const { return samples.back().s; }

  // index of the sample interval containing s
  int bracket(double s) const {
    if (samples.size() < 2 || s < s_lo() || s > s_hi())
      throw OrbitTooShort("orbit samples do not cover s = " + std::to_string(s));
    auto it = std::upper_bound(samples.begin(), samples.end(), s,
                               [](double v, const OrbitSample& a) { return v < a.s; });
    int k = static_cast<int>(it - samples.begin()) - 1;
    return std::min(k, static_cast<int>(samples.size()) - 2);
  }

  // cubic Hermite interpolation of the state between stored samples
  void eval(double s, Eigen::VectorXd* pos, Eigen::VectorXd* vel) const {
    const int k = bracket(s);
    const OrbitSample& a = samples[static_cast<size_t>(k)];
    const OrbitSample& b = samples[static_cast<size_t>(k) + 1];
    const double w = b.s - a.s;
    const double t = (s - a.s) / w;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    if (pos) *pos = h00 * a.pos + (h10 * w) * a.vel + h01 * b.pos + (h11 * w) * b.vel;
    if (vel) {
      const double g00 = (6 * t2 - 6 * t) / w, g10 = 3 * t2 - 4 * t + 1;
      const double g01 = (-6 * t2 + 6 * t) / w, g11 = 3 * t2 - 2 * t;
      *vel = g00 * a.pos + g10 * a.vel + g01 * b.pos + g11 * b.vel;
    }
  }

  double radius_at(double s) const {
    Eigen::VectorXd p;
    eval(s, &p, nullptr);
    return p.norm();
  }

  // unwrapped polar angle at s, anchored to the stored per-sample angles
  double theta_at(double s) const {
    const int k = bracket(s);
    const OrbitSample& a = samples[static_cast<size_t>(k)];
    Eigen::VectorXd p;
    eval(s, &p, nullptr);
    const double a1 = a.pos.dot(e1), b1 = a.pos.dot(e2);
    const double a2 = p.dot(e1), b2 = p.dot(e2);
    return a.theta + std::atan2(a1 * b2 - b1 * a2, a1 * a2 + b1 * b2);
  }
};

struct OrbitOptions {
  double rtol = 1e-12;
  double atol = 1e-14;
  double max_sweep = 0.5;  // max polar sweep per accepted step, keeps unwrapping unambiguous
  double h0 = 1e-3;
  Eigen::VectorXd plane_e1, plane_e2;  // optional plane embedding; empty picks coordinate axes
};

// closed-form angle 2 pi sqrt(1+lambda)/(2-alpha) between the asymptotic
// directions, in radians, unwrapped
inline double asymptotic_angle_theory(double alpha, double lambda) {
  detail::check_alpha_lambda(alpha, lambda, false);
  return 2.0 * M_PI * std::sqrt(1.0 + lambda) / (2.0 - alpha);
}

// polar angle still to be swept from radius R (> pericenter) out to infinity,
// one side: the zero-energy radial law gives
//   dtheta/dr = sqrt(1+lambda) / (r sqrt(r^{2-alpha} - 1)),
// which integrates to 2 sqrt(1+lambda)/(2-alpha) * (pi/2 - atan sqrt(R^{2-alpha}-1)).
inline double asymptotic_tail_angle(double alpha, double lambda, double R) {
  detail::check_alpha_lambda(alpha, lambda, false);
  if (!(R >= 1.0)) throw InvalidArgument("tail angle needs R >= 1");
  const double x = std::sqrt(std::max(0.0, std::pow(R, 2.0 - alpha) - 1.0));
  return std::sqrt(1.0 + lambda) * (2.0 / (2.0 - alpha)) * (M_PI / 2.0 - std::atan(x));
}

namespace detail {

// One embedded Dormand-Prince 5(4) step: fills y5 (5th order) and the
// embedded error estimate. f must map state -> derivative.
template <class F>
inline void dp54_step(const F& f, const Eigen::VectorXd& y, double h, const Eigen::VectorXd& k1,
                      Eigen::VectorXd* y5, Eigen::VectorXd* err, Eigen::VectorXd* k_last) {
  const Eigen::VectorXd k2 = f(y + h * (1.0 / 5) * k1);
  const Eigen::VectorXd k3 = f(y + h * ((3.0 / 40) * k1 + (9.0 / 40) * k2));
  const Eigen::VectorXd k4 = f(y + h * ((44.0 / 45) * k1 + (-56.0 / 15) * k2 + (32.0 / 9) * k3));
  const Eigen::VectorXd k5 =
      f(y + h * ((19372.0 / 6561) * k1 + (-25360.0 / 2187) * k2 + (64448.0 / 6561) * k3 +
                 (-212.0 / 729) * k4));
  const Eigen::VectorXd k6 =
      f(y + h * ((9017.0 / 3168) * k1 + (-355.0 / 33) * k2 + (46732.0 / 5247) * k3 +
                 (49.0 / 176) * k4 + (-5103.0 / 18656) * k5));
  *y5 = y + h * ((35.0 / 384) * k1 + (500.0 / 1113) * k3 + (125.0 / 192) * k4 +
                 (-2187.0 / 6784) * k5 + (11.0 / 84) * k6);
  const Eigen::VectorXd k7 = f(*y5);
  *err = h * ((71.0 / 57600) * k1 + (-71.0 / 16695) * k3 + (71.0 / 1920) * k4 +
              (-17253.0 / 339200) * k5 + (22.0 / 525) * k6 + (-1.0 / 40) * k7);
  *k_last = k7;
}

inline double wrms_norm(const Eigen::VectorXd& err, const Eigen::VectorXd& y0,
                        const Eigen::VectorXd& y1, double atol, double rtol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = err[i] / sc;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

}  // namespace detail

inline LimitOrbit integrate_limit_orbit(double alpha, double lambda, double mass_sum,
                                        double s_max, int d = 2, const OrbitOptions& opt = {}) {
  detail::check_alpha_lambda(alpha, lambda, true);
  if (!(mass_sum > 0.0) || !std::isfinite(mass_sum))
    throw InvalidArgument("mass_sum must be positive");
  if (!(s_max > 0.0) || !std::isfinite(s_max)) throw InvalidArgument("s_max must be positive");
  if (d < 2) throw InvalidArgument("d must be at least 2");
  const bool infinite = std::isinf(lambda);

  LimitOrbit orb;
  orb.alpha = alpha;
  orb.lambda = lambda;
  orb.mass_sum = mass_sum;
  orb.d = d;

  // orbit plane
  if (opt.plane_e1.size() > 0 || opt.plane_e2.size() > 0) {
    if (opt.plane_e1.size() != d || opt.plane_e2.size() != d)
      throw InvalidArgument("plane vectors must have length d");
    orb.e1 = opt.plane_e1.normalized();
    Eigen::VectorXd v2 = opt.plane_e2 - opt.plane_e2.dot(orb.e1) * orb.e1;
    if (v2.norm() < 1e-12) throw InvalidArgument("plane vectors are parallel");
    orb.e2 = v2.normalized();
  } else {
    orb.e1 = Eigen::VectorXd::Zero(d);
    orb.e2 = Eigen::VectorXd::Zero(d);
    orb.e1[0] = 1.0;
    orb.e2[1] = 1.0;
  }

  const double m = mass_sum;
  const double speed0 = std::sqrt(infinite ? 2.0 * m : 2.0 * m * (1.0 + lambda));
  auto accel = [&](const Eigen::VectorXd& q) -> Eigen::VectorXd {
    const double r2 = q.squaredNorm();
    const double r = std::sqrt(r2);
    double coef;
    if (infinite) {
      coef = -2.0 * m / (r2 * r2);
    } else {
      coef = -m * (alpha * std::pow(r, -alpha - 2.0) + 2.0 * lambda / (r2 * r2));
    }
    return coef * q;
  };
  auto rhs = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    Eigen::VectorXd dy(2 * d);
    dy.head(d) = y.tail(d);
    dy.tail(d) = accel(y.head(d));
    return dy;
  };
  auto energy_defect = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& v) -> double {
    const double r = q.norm();
    const double pot = infinite ? 1.0 / (r * r) : std::pow(r, -alpha) + lambda / (r * r);
    return v.squaredNorm() / (2.0 * m) - pot;
  };

  // integrate one direction from the pericenter; dir = +1 or -1
  auto sweep_branch = [&](int dir, std::vector<OrbitSample>* out) {
    Eigen::VectorXd y(2 * d);
    y.head(d) = orb.e1;
    y.tail(d) = dir * speed0 * orb.e2;
    double s = 0.0;
    double h = opt.h0;
    double err_prev = 1.0;
    Eigen::VectorXd k1 = rhs(y);
    double theta = 0.0;
    int rejects_in_a_row = 0;
    while (s < s_max) {
      if (s_max - s <= 1e-12 * s_max) break;  // stop instead of stalling on rounding
      h = std::min(h, s_max - s);
      Eigen::VectorXd y5, err, k_last;
      detail::dp54_step(rhs, y, h, k1, &y5, &err, &k_last);
      const double en = detail::wrms_norm(err, y, y5, opt.atol, opt.rtol);
      const Eigen::VectorXd qa = y.head(d), qb = y5.head(d);
      const double a1 = qa.dot(orb.e1), b1 = qa.dot(orb.e2);
      const double a2 = qb.dot(orb.e1), b2 = qb.dot(orb.e2);
      const double dtheta = std::atan2(a1 * b2 - b1 * a2, a1 * a2 + b1 * b2);
      if (en <= 1.0 && std::abs(dtheta) <= opt.max_sweep) {
        s += h;
        y = y5;
        k1 = k_last;
        theta += dtheta;  // polar angle change of the orbit, whichever branch
        OrbitSample smp;
        smp.s = dir * s;
        smp.pos = y.head(d);
        smp.vel = dir * y.tail(d);  // velocity with respect to increasing s
        smp.theta = theta;
        out->push_back(smp);
        orb.energy_residual =
            std::max(orb.energy_residual, std::abs(energy_defect(y.head(d), y.tail(d))));
        rejects_in_a_row = 0;
        double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.2) * std::pow(err_prev, 0.04);
        err_prev = std::max(en, 1e-4);
        h *= std::clamp(fac, 0.2, 5.0);
      } else {
        if (std::abs(dtheta) > opt.max_sweep)
          h *= std::max(0.25, 0.4 * opt.max_sweep / std::abs(dtheta));
        else
          h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.5);
        if (++rejects_in_a_row > 60 || h < 1e-13 * std::max(1.0, s))
          throw NoConvergence("limit orbit step size collapsed near s = " +
                              std::to_string(dir * s));
      }
    }
  };

  std::vector<OrbitSample> fwd, bwd;
  sweep_branch(+1, &fwd);
  sweep_branch(-1, &bwd);

  OrbitSample origin;
  origin.s = 0.0;
  origin.pos = orb.e1;
  origin.vel = speed0 * orb.e2;
  origin.theta = 0.0;

  orb.samples.reserve(bwd.size() + fwd.size() + 1);
  for (auto it = bwd.rbegin(); it != bwd.rend(); ++it) orb.samples.push_back(*it);
  orb.samples.push_back(origin);
  for (const auto& smp : fwd) orb.samples.push_back(smp);

  for (const auto& smp : orb.samples) {
    const Eigen::VectorXd off =
        smp.pos - smp.pos.dot(orb.e1) * orb.e1 - smp.pos.dot(orb.e2) * orb.e2;
    orb.planarity_residual = std::max(orb.planarity_residual, off.cwiseAbs().maxCoeff());
  }
  orb.swept_angle = orb.samples.back().theta - orb.samples.front().theta;

  // asymptotic directions: finite lambda orbits still sweep the closed-form
  // tail angle beyond the last sample, so rotate the end directions by it
  auto plane_dir = [&](const Eigen::VectorXd& p, double extra) -> Eigen::VectorXd {
    const double a = p.dot(orb.e1), b = p.dot(orb.e2);
    const double ang = std::atan2(b, a) + extra;
    return std::cos(ang) * orb.e1 + std::sin(ang) * orb.e2;
  };
  if (!infinite) {
    const double r_hi = orb.samples.back().pos.norm();
    const double r_lo = orb.samples.front().pos.norm();
    orb.u_plus = plane_dir(orb.samples.back().pos, asymptotic_tail_angle(alpha, lambda, r_hi));
    orb.u_minus = plane_dir(orb.samples.front().pos, -asymptotic_tail_angle(alpha, lambda, r_lo));
  } else {
    orb.u_plus = plane_dir(orb.samples.back().pos, 0.0);
    orb.u_minus = plane_dir(orb.samples.front().pos, 0.0);
  }
  return orb;
}

// Unwrapped sweep between the two radius-R crossings of the orbit plus the
// closed-form tails beyond them. include_tail=false returns the raw crossing
// sweep, which converges to the theory value from below as R grows.
inline double asymptotic_angle_numeric(const LimitOrbit& orbit, double R,
                                       bool include_tail = true) {
  if (std::isinf(orbit.lambda))
    throw InvalidArgument("asymptotic angle is defined for finite lambda orbits");
  if (!(R > 1.0)) throw InvalidArgument("crossing radius must exceed the pericenter norm 1");

  // first sample at or past radius R on the given side of s = 0
  auto crossing = [&](int dir) -> double {
    const auto& smp = orbit.samples;
    int k0 = orbit.bracket(0.0);
    double s_prev = 0.0;
    for (int k = k0 + (dir > 0 ? 1 : 0); k >= 0 && k < static_cast<int>(smp.size()); k += dir) {
      const auto& a = smp[static_cast<size_t>(k)];
      if (a.pos.norm() >= R) {
        double lo = std::min(s_prev, a.s), hi = std::max(s_prev, a.s);
        for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
          const double mid = 0.5 * (lo + hi);
          const bool outside = orbit.radius_at(mid) >= R;
          // radius grows with |s|
          if ((dir > 0) == outside)
            hi = mid;
          else
            lo = mid;
        }
        return 0.5 * (lo + hi);
      }
      s_prev = a.s;
    }
    throw OrbitTooShort("orbit never reaches radius " + std::to_string(R));
  };

  const double sp = crossing(+1);
  const double sm = crossing(-1);
  double sweep = orbit.theta_at(sp) - orbit.theta_at(sm);
  if (include_tail) sweep += 2.0 * asymptotic_tail_angle(orbit.alpha, orbit.lambda, R);
  return sweep;
}

enum class LimitKind { I, J };

// quadrature of the limit Lagrangian over [window_lo, window_hi]:
//   I: |xi'|^2/(2M) + 1/r^alpha + lambda/r^2
//   J: |zt'|^2/(2M) + 1/r^2
inline double limit_action_value(LimitKind kind, const LimitOrbit& orbit, double window_lo,
                                 double window_hi) {
  if (!(window_lo <= window_hi)) throw InvalidArgument("window must be ordered");
  if (window_lo < orbit.s_lo() || window_hi > orbit.s_hi())
    throw OrbitTooShort("window is not covered by the orbit samples");
  if (kind == LimitKind::I && std::isinf(orbit.lambda))
    throw InvalidArgument("kind I needs finite lambda");
  if (window_lo == window_hi) return 0.0;

  const double m = orbit.mass_sum;
  auto lagrangian = [&](const Eigen::VectorXd& q, const Eigen::VectorXd& v) -> double {
    const double r = q.norm();
    const double kin = v.squaredNorm() / (2.0 * m);
    if (kind == LimitKind::J) return kin + 1.0 / (r * r);
    return kin + std::pow(r, -orbit.alpha) + orbit.lambda / (r * r);
  };
  auto eval_l = [&](double s) -> double {
    Eigen::VectorXd q, v;
    orbit.eval(s, &q, &v);
    return lagrangian(q, v);
  };

  // Simpson on each sample interval clipped to the window
  double total = 0.0;
  int k = orbit.bracket(window_lo);
  while (true) {
    const double a = orbit.samples[static_cast<size_t>(k)].s;
    const double b = orbit.samples[static_cast<size_t>(k) + 1].s;
    const double lo = std::max(a, window_lo);
    const double hi = std::min(b, window_hi);
    if (hi > lo) {
      const double mid = 0.5 * (lo + hi);
      total += (hi - lo) / 6.0 * (eval_l(lo) + 4.0 * eval_l(mid) + eval_l(hi));
    }
    if (b >= window_hi || k + 2 >= static_cast<int>(orbit.samples.size())) break;
    ++k;
  }
  return total;
}

// transverse Morse data of the limit orbit
struct IndexReport {
  double alpha = 0.0;
  double lambda = 0.0;
  int i_alpha = 0;
  int i_alpha_lambda = 0;  // -1 when lambda is infinite (the bound is not finite there)
  int transverse_count = 0;
  double truncation_L = 0.0;
  int mesh = 0;
};

namespace detail {

// Stiffness of the transverse form on linear elements over [-L, L] with zero
// Dirichlet ends:
//   Q(phi) = int |phi'|^2 / M - W(s) |phi|^2 ds,
//   W(s) = alpha / r^{alpha+2} + 2 lambda / r^4   (finite lambda)
//   W(s) = 2 / r^4 with r = 1                     (infinite lambda)
// Radius values come from the even symmetry r(-s) = r(s) of the orbit.
// Returns the interior tridiagonal (diag, off).
inline void transverse_assemble(double alpha, double lambda, double mass_sum, double L, int n,
                                Eigen::VectorXd* diag, Eigen::VectorXd* off) {
  check_alpha_lambda(alpha, lambda, true);
  if (!(L > 0.0)) throw InvalidArgument("truncation L must be positive");
  if (n < 4) throw InvalidArgument("mesh must have at least 4 elements");
  const bool infinite = std::isinf(lambda);

  LimitOrbit orbit;
  if (!infinite) orbit = integrate_limit_orbit(alpha, lambda, mass_sum, L + 2.0, 2);
  auto w_of = [&](double s) -> double {
    if (infinite) return 2.0;  // unit circle
    const double r = orbit.radius_at(std::abs(s));
    return alpha * std::pow(r, -alpha - 2.0) + 2.0 * lambda * std::pow(r, -4.0);
  };

  const double h = 2.0 * L / n;
  const int nu = n - 1;  // interior nodes
  Eigen::VectorXd dg = Eigen::VectorXd::Zero(nu);
  Eigen::VectorXd od = Eigen::VectorXd::Zero(std::max(nu - 1, 0));

  const double gauss_off = h / (2.0 * std::sqrt(3.0));
  for (int e = 0; e < n; ++e) {
    const double sa = -L + e * h;
    const double mid = sa + 0.5 * h;
    const int left = e - 1;  // interior index of the element's left node
    double v11 = 0.0, v22 = 0.0, v12 = 0.0;
    for (int g = 0; g < 2; ++g) {
      const double sg = mid + (g == 0 ? -gauss_off : gauss_off);
      const double wgt = 0.5 * h * w_of(sg);
      const double n2 = (sg - sa) / h;  // hat of the right node
      const double n1 = 1.0 - n2;
      v11 += wgt * n1 * n1;
      v22 += wgt * n2 * n2;
      v12 += wgt * n1 * n2;
    }
    const double kel = 1.0 / (mass_sum * h);
    if (left >= 0) dg[left] += kel - v11;
    if (left + 1 < nu) dg[left + 1] += kel - v22;
    if (left >= 0 && left + 1 < nu) od[left] += -kel - v12;
  }
  *diag = dg;
  *off = od;
}

inline int transverse_negative_count(double alpha, double lambda, double mass_sum, double L,
                                     int n) {
  Eigen::VectorXd diag, off;
  transverse_assemble(alpha, lambda, mass_sum, L, n, &diag, &off);
  return tridiagonal_negative_count(diag, off);
}

}  // namespace detail

// Negative count of the transverse second-variation form along the limit
// orbit, on [-L, L] with the given number of mesh elements. The count is
// checked against the same mesh density on [-2L, 2L]: for finite lambda a
// mismatch throws TruncationTooSmall, for infinite lambda growth with L is
// the expected signal and the check is skipped.
inline IndexReport transverse_index(double alpha, double lambda, double L, int mesh,
                                    double mass_sum = 1.0) {
  detail::check_alpha_lambda(alpha, lambda, true);
  const bool infinite = std::isinf(lambda);
  const int c1 = detail::transverse_negative_count(alpha, lambda, mass_sum, L, mesh);
  if (!infinite) {
    const int c2 = detail::transverse_negative_count(alpha, lambda, mass_sum, 2.0 * L, 2 * mesh);
    if (c2 != c1)
      throw TruncationTooSmall("transverse count still moving: " + std::to_string(c1) + " on [-" +
                               std::to_string(L) + "," + std::to_string(L) + "] vs " +
                               std::to_string(c2) + " on the doubled interval");
  }
  IndexReport rep;
  rep.alpha = alpha;
  rep.lambda = lambda;
  rep.i_alpha = index_i(alpha);
  rep.i_alpha_lambda = infinite ? -1 : index_i_lambda(alpha, lambda);
  rep.transverse_count = c1;
  rep.truncation_L = L;
  rep.mesh = mesh;
  return rep;
}

// rough arc-length needed to reach radius R, from the large-r asymptotics
// r ~ ((2+alpha)/2 sqrt(2M) s)^{2/(2+alpha)}, padded for safety
inline double s_for_radius(double alpha, double mass_sum, double R) {
  const double s_est = 2.0 / (2.0 + alpha) * std::pow(R, 1.0 + alpha / 2.0) /
                       std::sqrt(2.0 * mass_sum);
  return 1.25 * s_est + 5.0;
}

}  // namespace morsenb

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <vector>

#include "morsenb/errors.hpp"

namespace morsenb {

// Anything the solvers can drive: a twice-differentiable functional of one
// flat vector plus the SPD Gram fixing the geometry (residual norms are
// measured in the dual of that Gram, descent is preconditioned by it).
template <class P>
concept SmoothFunctional = requires(const P& p, const Eigen::VectorXd& y) {
  { p.value(y) } -> std::convertible_to<double>;
  { p.gradient(y) } -> std::convertible_to<Eigen::VectorXd>;
  { p.hessian(y) } -> std::convertible_to<Eigen::MatrixXd>;
  { p.gram() } -> std::convertible_to<Eigen::MatrixXd>;
  { p.gram_llt() } -> std::convertible_to<Eigen::LLT<Eigen::MatrixXd>>;
};

template <SmoothFunctional P>
double dual_residual(const P& p, const Eigen::VectorXd& g) {
  return std::sqrt(g.dot(p.gram_llt().solve(g)));
}

struct SolveResult {
  Eigen::VectorXd y;
  double value = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool newton_used = false;
  bool regularized = false;
};

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 60;
  double reg0_rel = 1e-11;  // first Tikhonov shift, relative to |H|
};

// Damped Newton iteration on the gradient, converging to critical points of
// any index. Acceptance is by residual decrease, with step halving and an
// escalating Tikhonov shift (relative to the Gram) when a step misbehaves.
template <SmoothFunctional P>
SolveResult newton_refine(const P& p, Eigen::VectorXd y, const NewtonOptions& opt = {}) {
  SolveResult out;
  out.newton_used = true;
  Eigen::VectorXd g = p.gradient(y);
  double res = dual_residual(p, g);
  for (int it = 0; it < opt.max_iter; ++it) {
    if (res <= opt.tol) {
      out.converged = true;
      break;
    }
    const Eigen::MatrixXd h = p.hessian(y);
    const double hscale = h.cwiseAbs().maxCoeff();
    double tau = 0.0;
    bool accepted = false;
    for (int reg = 0; reg < 12 && !accepted; ++reg) {
      Eigen::MatrixXd hs = h;
      if (tau > 0.0) hs += tau * p.gram();
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hs);
      if (ldlt.info() == Eigen::Success) {
        Eigen::VectorXd step = ldlt.solve(-g);
        if (step.allFinite()) {
          double scale = 1.0;
          for (int half = 0; half < 8; ++half) {
            const Eigen::VectorXd trial = y + scale * step;
            double tres = std::numeric_limits<double>::infinity();
            Eigen::VectorXd tg;
            try {
              tg = p.gradient(trial);
              tres = dual_residual(p, tg);
            } catch (const InfiniteAction&) {
              // fell into the barrier, shorten
            }
            if (tres < res || tres <= opt.tol) {
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
      if (!accepted) {
        tau = (tau == 0.0) ? opt.reg0_rel * (hscale > 0.0 ? hscale : 1.0) : tau * 100.0;
        out.regularized = true;
      }
    }
    ++out.iterations;
    if (!accepted) break;  // no usable step at any damping
  }
  out.y = std::move(y);
  out.residual = res;
  out.value = p.value(out.y);
  if (res <= opt.tol) out.converged = true;
  return out;
}

struct MinimizeOptions {
  double tol = 1e-10;
  int max_iter = 5000;
  double newton_trigger = 1e-4;  // switch to Newton when the residual falls below
  bool newton_finish = true;
  // Gram-norm cap on each applied step. A finite cap keeps the iterates from
  // hopping over thin high-action regions in one move (the winding classes of
  // near-collision paths are only barrier-protected against short steps).
  double max_step = std::numeric_limits<double>::infinity();
};

// Gram-preconditioned gradient descent with Armijo backtracking; hands off
// to Newton near the bottom when the Hessian has become positive definite.
template <SmoothFunctional P>
SolveResult minimize(const P& p, Eigen::VectorXd y, const MinimizeOptions& opt = {}) {
  SolveResult out;
  double f = p.value(y);
  double step = 1.0;
  for (int it = 0; it < opt.max_iter; ++it) {
    Eigen::VectorXd g = p.gradient(y);
    const double res = dual_residual(p, g);
    out.iterations = it;
    if (res <= opt.tol) {
      out.converged = true;
      break;
    }
    if (opt.newton_finish && res <= opt.newton_trigger) {
      // only safe if we are in a convex basin; otherwise keep descending
      const Eigen::MatrixXd h = p.hessian(y);
      Eigen::LLT<Eigen::MatrixXd> llt(h);
      if (llt.info() == Eigen::Success) {
        NewtonOptions nopt;
        nopt.tol = opt.tol;
        SolveResult nr = newton_refine(p, y, nopt);
        if (nr.converged) {
          nr.iterations += it;
          nr.value = p.value(nr.y);
          return nr;
        }
      }
    }
    const Eigen::VectorXd dir = p.gram_llt().solve(-g);
    const double slope = g.dot(dir);  // negative
    // |dir|_Gram = sqrt(-slope) since dir solves the Gram system on -g
    const double t_cap = std::isfinite(opt.max_step) && slope < 0.0
                             ? opt.max_step / std::sqrt(-slope)
                             : std::numeric_limits<double>::infinity();
    double t = std::min(step, t_cap);
    bool moved = false;
    for (int bt = 0; bt < 40; ++bt) {
      double ft = std::numeric_limits<double>::infinity();
      try {
        ft = p.value(y + t * dir);
      } catch (const InfiniteAction&) {
      }
      if (ft <= f + 1e-4 * t * slope) {
        y += t * dir;
        f = ft;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;               // line search exhausted
    step = std::min(t * 2.0, 4.0);  // warm-start next search
  }
  Eigen::VectorXd g = p.gradient(y);
  out.residual = dual_residual(p, g);
  if (out.residual <= opt.tol) out.converged = true;
  out.y = std::move(y);
  out.value = f;
  return out;
}

struct MountainPassOptions {
  int beads = 19;
  double tol = 1e-10;         // final Newton tolerance at the saddle
  double string_tol = 1e-3;   // transverse residual that triggers the Newton stage
  int max_outer = 600;
  double step = 0.05;         // descent step per bead per sweep, relative units
};

struct MountainPassResult {
  SolveResult saddle;
  std::vector<double> bead_values;
  int climbing_bead = -1;
  int outer_iterations = 0;
};

// Simplified string method between two near-critical anchors: beads relax
// under preconditioned descent, the string is reparameterized to equal Gram
// arc length every sweep, and the top bead is Newton-refined once its
// transverse residual is small.
template <SmoothFunctional P>
MountainPassResult mountain_pass(const P& p, const Eigen::VectorXd& ya, const Eigen::VectorXd& yb,
                                 const MountainPassOptions& opt = {}) {
  const auto bnorm = [&](const Eigen::VectorXd& v) { return std::sqrt(v.dot(p.gram() * v)); };
  const double gap = bnorm(yb - ya);
  if (!(gap > 1e-10)) throw StringCollapse("mountain_pass: anchors coincide");
  const int nb = std::max(opt.beads, 5);
  std::vector<Eigen::VectorXd> beads(static_cast<size_t>(nb));
  for (int i = 0; i < nb; ++i) {
    const double w = static_cast<double>(i) / (nb - 1);
    beads[static_cast<size_t>(i)] = (1.0 - w) * ya + w * yb;
  }

  MountainPassResult out;
  int top = nb / 2;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    out.outer_iterations = outer + 1;
    // one preconditioned descent sweep over the interior beads
    for (int i = 1; i + 1 < nb; ++i) {
      auto& bead = beads[static_cast<size_t>(i)];
      Eigen::VectorXd g;
      try {
        g = p.gradient(bead);
      } catch (const InfiniteAction&) {
        continue;  // bead sits on the barrier; reparameterization will move it
      }
      const Eigen::VectorXd dir = p.gram_llt().solve(-g);
      const double dn = bnorm(dir);
      if (dn == 0.0) continue;
      const double cap = 0.5 * gap / (nb - 1);
      const double t = std::min(opt.step, cap / dn);
      Eigen::VectorXd trial = bead + t * dir;
      try {
        (void)p.value(trial);
        bead = std::move(trial);
      } catch (const InfiniteAction&) {
      }
    }
    // reparameterize to equal arc length
    std::vector<double> s(static_cast<size_t>(nb), 0.0);
    for (int i = 1; i < nb; ++i)
      s[static_cast<size_t>(i)] = s[static_cast<size_t>(i - 1)] +
                                  bnorm(beads[static_cast<size_t>(i)] - beads[static_cast<size_t>(i - 1)]);
    const double len = s.back();
    if (!(len > 1e-9 * std::max(1.0, gap)))
      throw StringCollapse("mountain_pass: string length vanished");
    std::vector<Eigen::VectorXd> rs(static_cast<size_t>(nb));
    rs.front() = beads.front();
    rs.back() = beads.back();
    for (int i = 1; i + 1 < nb; ++i) {
      const double target = len * i / (nb - 1);
      int seg = 0;
      while (seg + 2 < nb && s[static_cast<size_t>(seg + 1)] < target) ++seg;
      const double s0 = s[static_cast<size_t>(seg)], s1 = s[static_cast<size_t>(seg + 1)];
      const double w = (s1 > s0) ? (target - s0) / (s1 - s0) : 0.0;
      rs[static_cast<size_t>(i)] =
          (1.0 - w) * beads[static_cast<size_t>(seg)] + w * beads[static_cast<size_t>(seg + 1)];
    }
    beads = std::move(rs);

    // find the climbing bead and test its transverse residual
    double fmax = -std::numeric_limits<double>::infinity();
    top = nb / 2;
    out.bead_values.assign(static_cast<size_t>(nb), 0.0);
    for (int i = 0; i < nb; ++i) {
      double fi = std::numeric_limits<double>::infinity();
      try {
        fi = p.value(beads[static_cast<size_t>(i)]);
      } catch (const InfiniteAction&) {
      }
      out.bead_values[static_cast<size_t>(i)] = fi;
      if (i > 0 && i + 1 < nb && std::isfinite(fi) && fi > fmax) {
        fmax = fi;
        top = i;
      }
    }
    const auto& yt = beads[static_cast<size_t>(top)];
    Eigen::VectorXd g;
    try {
      g = p.gradient(yt);
    } catch (const InfiniteAction&) {
      continue;
    }
    Eigen::VectorXd tau = beads[static_cast<size_t>(top + 1)] - beads[static_cast<size_t>(top - 1)];
    const double tn = bnorm(tau);
    if (tn > 0.0) tau /= tn;
    const Eigen::VectorXd gperp = g - (g.dot(tau)) * (p.gram() * tau);
    if (dual_residual(p, gperp) <= opt.string_tol) {
      NewtonOptions nopt;
      nopt.tol = opt.tol;
      SolveResult nr = newton_refine(p, yt, nopt);
      if (nr.converged) {
        out.saddle = std::move(nr);
        out.climbing_bead = top;
        return out;
      }
    }
  }
  // last resort: refine the current top bead anyway and report honestly
  NewtonOptions nopt;
  nopt.tol = opt.tol;
  out.saddle = newton_refine(p, beads[static_cast<size_t>(top)], nopt);
  out.climbing_bead = top;
  return out;
}

}  // namespace morsenb

// morsenb command line. Four subcommands drive the library end to end:
//
//   check         FD and identity invariant suites over the core calculus
//   continuation  eps_n -> 0 continuation from a seed path, artifacts on disk
//   limit-sweep   (alpha, lambda) sweep of asymptotic angles and index counts
//   blowup        rescaled profiles, directions and quadratic-form series
//                 for the collision events of a stored sequence
//
// Every subcommand takes --config PATH (JSON), --out DIR, --seed INT,
// --workers INT and --fault-inject NAME, each overridable through the
// matching MORSENB_* environment variable (explicit flags win). Exit codes:
// 0 success, 1 scientific failure, 2 usage or config error. Outputs carry no
// timestamps, so identical config and seed give byte-identical files.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "morsenb/action.hpp"
#include "morsenb/collision.hpp"
#include "morsenb/continuation.hpp"
#include "morsenb/errors.hpp"
#include "morsenb/jsonio.hpp"
#include "morsenb/limit.hpp"
#include "morsenb/path.hpp"
#include "morsenb/potential.hpp"
#include "morsenb/system.hpp"
#include "nlohmann/json.hpp"

namespace {

using nlohmann::json;

struct CommonArgs {
  std::string config;
  std::string out = "out";
  long long seed = 20240816;
  int workers = 1;
  std::string fault;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file")->envname("MORSENB_CONFIG");
  cmd->add_option("--out", a.out, "output directory")
      ->envname("MORSENB_OUT")
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "RNG seed for every stochastic step")
      ->envname("MORSENB_SEED")
      ->capture_default_str();
  cmd->add_option("--workers", a.workers, "threads for independent grid points")
      ->envname("MORSENB_WORKERS")
      ->capture_default_str();
  cmd->add_option("--fault-inject", a.fault, "named fault for negative controls (test only)")
      ->envname("MORSENB_FAULT_INJECT");
}

json load_config(const CommonArgs& a) {
  if (a.config.empty()) return json::object();
  return morsenb::read_json_file(a.config);
}

// Schema gate: every key must be known. Typos in configs fail loudly instead
// of silently running defaults.
void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw morsenb::ParseError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw morsenb::ParseError(where + ": unknown key \"" + it.key() + "\"");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw morsenb::ParseError(std::string("config key \"") + key + "\": " + e.what());
  }
}

morsenb::Config parse_config_matrix(const json& j, const char* key, int n, int d) {
  const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
  if (static_cast<int>(rows.size()) != n)
    throw morsenb::ParseError(std::string(key) + ": expected " + std::to_string(n) + " rows");
  morsenb::Config q(n, d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[static_cast<size_t>(i)].size()) != d)
      throw morsenb::ParseError(std::string(key) + ": row " + std::to_string(i) + " needs " +
                                std::to_string(d) + " entries");
    for (int a = 0; a < d; ++a) q(i, a) = rows[static_cast<size_t>(i)][static_cast<size_t>(a)];
  }
  return q;
}

void reject_fault(const CommonArgs& a, const char* cmd) {
  if (!a.fault.empty())
    throw morsenb::InvalidArgument(std::string(cmd) +
                                   ": fault injection is only wired into the check command");
}

// ---------------------------------------------------------------------------
// check

morsenb::Config random_separated_config(std::mt19937& rng, int n, int d, double min_sep) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    morsenb::Config q(n, d);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) q(i, a) = gauss(rng);
    double rmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      for (int k = i + 1; k < n; ++k) rmin = std::min(rmin, (q.row(i) - q.row(k)).norm());
    if (rmin > min_sep) return q;
  }
  throw morsenb::Error("random_separated_config: rejection sampling stalled");
}

morsenb::Config center(const morsenb::MassSystem& sys, morsenb::Config q) {
  const Eigen::RowVectorXd bary =
      (sys.masses.transpose() * q) / sys.masses.sum();
  q.rowwise() -= bary;
  return q;
}

struct SuiteResult {
  std::string name;
  int checks = 0;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool pass = false;
};

void to_json(json& j, const SuiteResult& s) {
  j = json{{"name", s.name},
           {"checks", s.checks},
           {"max_rel_error", s.max_rel_error},
           {"tol", s.tol},
           {"pass", s.pass}};
}

// Gradient of the interaction sum against central differences of its value.
SuiteResult suite_core_gradient(std::mt19937& rng, int trials, double tol) {
  SuiteResult s{"core_gradient_fd", 0, 0.0, tol, false};
  for (int t = 0; t < trials; ++t)
    for (int n : {2, 3, 4})
      for (int d : {2, 3}) {
        morsenb::MassSystem sys(d, 0.7 + 0.2 * (t % 4), Eigen::VectorXd::LinSpaced(n, 1.0, 2.0));
        const morsenb::Config q = random_separated_config(rng, n, d, 0.5);
        const double eps = (t % 2) ? 0.1 : 0.0;
        const morsenb::Config g = morsenb::grad_potential(sys, q, eps);
        morsenb::Config fd(n, d);
        const double h = 1e-5;
        for (int i = 0; i < n; ++i)
          for (int a = 0; a < d; ++a) {
            morsenb::Config qp = q, qm = q;
            qp(i, a) += h;
            qm(i, a) -= h;
            const double fp = morsenb::potential_weak(sys, qp) +
                              eps * morsenb::potential_strong(sys, qp);
            const double fm = morsenb::potential_weak(sys, qm) +
                              eps * morsenb::potential_strong(sys, qm);
            fd(i, a) = (fp - fm) / (2.0 * h);
          }
        const double rel = (fd - g).norm() / std::max(1.0, g.norm());
        s.max_rel_error = std::max(s.max_rel_error, rel);
        ++s.checks;
      }
  s.pass = s.max_rel_error <= s.tol;
  return s;
}

// Interaction Hessian against central differences of the gradient.
SuiteResult suite_core_hessian(std::mt19937& rng, int trials, double tol) {
  SuiteResult s{"core_hessian_fd", 0, 0.0, tol, false};
  for (int t = 0; t < trials; ++t)
    for (int n : {2, 3}) {
      const int d = 3;
      morsenb::MassSystem sys(d, 1.0 + 0.3 * (t % 3), Eigen::VectorXd::Ones(n));
      const morsenb::Config q = random_separated_config(rng, n, d, 0.5);
      const double eps = 0.05;
      const Eigen::MatrixXd hq = morsenb::hessian_dense(sys, q, eps);
      Eigen::MatrixXd fd(n * d, n * d);
      const double h = 1e-5;
      for (int i = 0; i < n; ++i)
        for (int a = 0; a < d; ++a) {
          morsenb::Config qp = q, qm = q;
          qp(i, a) += h;
          qm(i, a) -= h;
          const morsenb::Config gp = morsenb::grad_potential(sys, qp, eps);
          const morsenb::Config gm = morsenb::grad_potential(sys, qm, eps);
          for (int k = 0; k < n; ++k)
            for (int b = 0; b < d; ++b)
              fd(k * d + b, i * d + a) = (gp(k, b) - gm(k, b)) / (2.0 * h);
        }
      const double rel = (fd - hq).norm() / std::max(1.0, hq.norm());
      s.max_rel_error = std::max(s.max_rel_error, rel);
      ++s.checks;
    }
  s.pass = s.max_rel_error <= s.tol;
  return s;
}

// The discrete kinetic term is exact for the piecewise-linear interpolant;
// resampling onto the same grid must reproduce the nodes bitwise.
SuiteResult suite_path_identities(std::mt19937& rng, int trials, int m_nodes) {
  SuiteResult s{"path_identities", 0, 0.0, 1e-12, false};
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + t % 2, d = 3;
    morsenb::MassSystem sys(d, 1.0, Eigen::VectorXd::LinSpaced(n, 1.0, 1.5));
    const morsenb::Config qa = center(sys, random_separated_config(rng, n, d, 1.0));
    morsenb::Config step(n, d);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) step(i, a) = 0.1 * gauss(rng);
    const morsenb::Config qb = center(sys, qa + step);
    morsenb::DiscretePath p = morsenb::make_path_linear(sys, qa, qb, 0.0, 1.0, m_nodes);
    const morsenb::ActionValue av = morsenb::action_value(p, 0.0);
    double kin = 0.0;
    for (int k = 0; k + 1 < p.m_nodes(); ++k) {
      const morsenb::Config dq =
          p.nodes[static_cast<size_t>(k + 1)] - p.nodes[static_cast<size_t>(k)];
      for (int i = 0; i < n; ++i) kin += 0.5 * sys.masses[i] * dq.row(i).squaredNorm() / p.h();
    }
    const double rel = std::abs(av.kinetic - kin) / std::max(1.0, std::abs(kin));
    s.max_rel_error = std::max(s.max_rel_error, rel);
    ++s.checks;

    const morsenb::DiscretePath r = morsenb::resample_path(p, p.m_nodes());
    double node_gap = 0.0;
    for (int k = 0; k < p.m_nodes(); ++k)
      node_gap = std::max(node_gap,
                          (r.nodes[static_cast<size_t>(k)] - p.nodes[static_cast<size_t>(k)])
                              .cwiseAbs()
                              .maxCoeff());
    s.max_rel_error = std::max(s.max_rel_error, node_gap);
    ++s.checks;
  }
  s.pass = s.max_rel_error <= s.tol;
  return s;
}

// Directional FD checks of the reduced action gradient and Hessian on random
// collision-free paths. The gradient_bias fault perturbs the analytic
// gradient before comparison, which must trip this suite.
SuiteResult suite_action_fd(std::mt19937& rng, int trials, int m_nodes, double tol, bool bias) {
  SuiteResult s{"action_fd", 0, 0.0, tol, false};
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    const int n = 2 + t % 2, d = 3;
    morsenb::MassSystem sys(d, 1.0, Eigen::VectorXd::LinSpaced(n, 1.0, 2.0));
    const morsenb::Config qa = center(sys, random_separated_config(rng, n, d, 1.0));
    morsenb::Config step(n, d);
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) step(i, a) = 0.1 * gauss(rng);
    const morsenb::Config qb = center(sys, qa + step);
    const morsenb::DiscretePath p = morsenb::make_path_linear(sys, qa, qb, 0.0, 1.0, m_nodes);

    morsenb::ActionProblem prob = morsenb::ActionProblem::from_path(p, 0.05);
    const Eigen::VectorXd y = prob.interior_from_path(p);
    Eigen::VectorXd g = prob.gradient(y);
    if (bias) g.array() += 1e-3;
    const Eigen::MatrixXd hess = prob.hessian(y);
    const double h = 1e-5;
    for (int rep = 0; rep < 3; ++rep) {
      Eigen::VectorXd v(y.size()), w(y.size());
      for (Eigen::Index k = 0; k < y.size(); ++k) {
        v[k] = gauss(rng);
        w[k] = gauss(rng);
      }
      v /= v.norm();
      w /= w.norm();

      const double dval = (prob.value(y + h * v) - prob.value(y - h * v)) / (2.0 * h);
      const double rel_g = std::abs(dval - g.dot(v)) / std::max(1.0, std::abs(dval));
      s.max_rel_error = std::max(s.max_rel_error, rel_g);
      ++s.checks;

      const Eigen::VectorXd dgrad =
          (prob.gradient(y + h * v) - prob.gradient(y - h * v)) / (2.0 * h);
      const double rel_h =
          std::abs(w.dot(dgrad) - w.dot(hess * v)) / std::max(1.0, dgrad.norm());
      s.max_rel_error = std::max(s.max_rel_error, rel_h);
      ++s.checks;
    }
  }
  s.pass = s.max_rel_error <= s.tol;
  return s;
}

int cmd_check(const CommonArgs& args) {
  const json cfg = load_config(args);
  check_keys(cfg, "check config", {"trials", "m_nodes", "tol_rel"});
  const int trials = get_or(cfg, "trials", 8);
  const int m_nodes = get_or(cfg, "m_nodes", 24);
  const double tol = get_or(cfg, "tol_rel", 1e-6);
  if (trials < 1) throw morsenb::InvalidArgument("check: trials must be >= 1");
  if (m_nodes < 3) throw morsenb::InvalidArgument("check: m_nodes must be >= 3");
  if (!(tol > 0.0)) throw morsenb::InvalidArgument("check: tol_rel must be positive");

  bool bias = false;
  if (!args.fault.empty()) {
    if (args.fault == "gradient_bias")
      bias = true;
    else
      throw morsenb::InvalidArgument("check: unknown fault \"" + args.fault + "\"");
  }

  std::mt19937 rng(static_cast<unsigned>(args.seed));
  std::vector<SuiteResult> suites;
  suites.push_back(suite_core_gradient(rng, trials, tol));
  suites.push_back(suite_core_hessian(rng, trials, tol));
  suites.push_back(suite_path_identities(rng, trials, m_nodes));
  suites.push_back(suite_action_fd(rng, trials, m_nodes, tol, bias));

  bool all = true;
  for (const SuiteResult& s : suites) {
    all = all && s.pass;
    std::cout << (s.pass ? "pass" : "FAIL") << "  " << s.name << "  checks=" << s.checks
              << "  max_rel_error=" << s.max_rel_error << "  tol=" << s.tol << "\n";
  }
  const json summary{{"seed", args.seed},
                     {"fault", args.fault},
                     {"trials", trials},
                     {"suites", suites},
                     {"pass", all}};
  morsenb::write_json_atomic(std::filesystem::path(args.out) / "check.json", summary);
  std::cout << (all ? "check: all suites pass" : "check: at least one suite failed") << "\n";
  return all ? 0 : 1;
}

// ---------------------------------------------------------------------------
// continuation

morsenb::StageSolver parse_solver(const std::string& name) {
  if (name == "descent_then_newton") return morsenb::StageSolver::DescentThenNewton;
  if (name == "newton_only") return morsenb::StageSolver::NewtonOnly;
  if (name == "planar_then_newton") return morsenb::StageSolver::PlanarThenNewton;
  throw morsenb::InvalidArgument("continuation: unknown solver \"" + name + "\"");
}

int cmd_continuation(const CommonArgs& args) {
  reject_fault(args, "continuation");
  const json cfg = load_config(args);
  check_keys(cfg, "continuation config",
             {"system", "qa", "qb", "t1", "t2", "m_nodes", "eps_schedule", "tol", "solver",
              "seed_kind", "bounce", "action_bound", "tail"});

  json jsys = cfg.contains("system") ? cfg.at("system") : json::object();
  check_keys(jsys, "continuation config system", {"alpha", "masses", "d"});
  const double alpha = get_or(jsys, "alpha", 1.0);
  const std::vector<double> masses = get_or(jsys, "masses", std::vector<double>{1.0, 1.0});
  const int d = get_or(jsys, "d", 3);
  Eigen::VectorXd mvec(static_cast<Eigen::Index>(masses.size()));
  for (size_t i = 0; i < masses.size(); ++i) mvec[static_cast<Eigen::Index>(i)] = masses[i];
  const morsenb::MassSystem sys(d, alpha, mvec);
  const int n = sys.n_bodies();

  morsenb::Config qa(n, d), qb(n, d);
  if (cfg.contains("qa") != cfg.contains("qb"))
    throw morsenb::ParseError("continuation config: qa and qb must be given together");
  if (cfg.contains("qa")) {
    qa = parse_config_matrix(cfg, "qa", n, d);
    qb = parse_config_matrix(cfg, "qb", n, d);
  } else {
    if (n != 2)
      throw morsenb::InvalidArgument(
          "continuation: default endpoints exist only for two bodies; give qa and qb");
    qa.setZero();
    qa(0, 0) = -0.5;
    qa(1, 0) = 0.5;
    qb = -qa;
  }

  const double t1 = get_or(cfg, "t1", 0.0);
  const double t2 = get_or(cfg, "t2", 1.0);
  const int m = get_or(cfg, "m_nodes", 129);
  const std::vector<double> schedule =
      get_or(cfg, "eps_schedule", std::vector<double>{0.25, 0.0625, 0.015625});
  const std::string seed_kind = get_or<std::string>(cfg, "seed_kind", n == 2 ? "bounce" : "line");

  morsenb::DiscretePath seed_path;
  if (seed_kind == "bounce") {
    json jb = cfg.contains("bounce") ? cfg.at("bounce") : json::object();
    check_keys(jb, "continuation config bounce", {"half_turns", "dip"});
    morsenb::BounceSeedOptions bopt;
    bopt.half_turns = get_or(jb, "half_turns", bopt.half_turns);
    bopt.dip = get_or(jb, "dip", bopt.dip);
    bopt.rng_seed = static_cast<unsigned>(args.seed);
    seed_path = morsenb::make_bounce_seed(sys, qa, qb, t1, t2, m, bopt);
  } else if (seed_kind == "line") {
    seed_path = morsenb::make_path_linear(sys, qa, qb, t1, t2, m);
  } else {
    throw morsenb::InvalidArgument("continuation: unknown seed_kind \"" + seed_kind + "\"");
  }

  morsenb::ContinuationOptions opt;
  opt.tol = get_or(cfg, "tol", 1e-8);
  opt.tail = get_or(cfg, "tail", opt.tail);
  opt.solver = parse_solver(get_or<std::string>(
      cfg, "solver", seed_kind == "bounce" ? "planar_then_newton" : "descent_then_newton"));
  if (cfg.contains("action_bound")) opt.action_bound = cfg.at("action_bound").get<double>();

  const morsenb::WeakCriticalSequence seq = morsenb::continuation(seed_path, schedule, opt);

  const std::filesystem::path out(args.out);
  morsenb::save_sequence(out / "sequence", seq);

  std::string csv = "n,eps,action_total,residual_h1dual,morse_index,delta,t_star,converged\n";
  for (size_t k = 0; k < seq.records.size(); ++k) {
    const morsenb::CriticalPointRecord& r = seq.records[k];
    csv += morsenb::csv_join({morsenb::csv_cell(static_cast<int>(k) + 1),
                              morsenb::csv_cell(r.eps), morsenb::csv_cell(r.action.total),
                              morsenb::csv_cell(r.residual_h1dual),
                              morsenb::csv_cell(r.morse_index),
                              morsenb::csv_cell(r.closest.delta),
                              morsenb::csv_cell(r.closest.t_star),
                              morsenb::csv_cell(r.converged ? 1 : 0)}) +
           "\n";
    std::cout << "n=" << k + 1 << "  eps=" << r.eps << "  action=" << r.action.total
              << "  index=" << r.morse_index << "  delta=" << r.closest.delta
              << "  residual=" << r.residual_h1dual
              << (r.converged ? "" : "  NOT CONVERGED") << "\n";
  }
  morsenb::write_text_atomic(out / "series.csv", csv);

  json jbound;
  std::optional<morsenb::IndexBoundReport> report;
  try {
    const auto events = morsenb::detect_collisions(seq);
    report = morsenb::verify_index_bound(seq, morsenb::count_binary_events(events));
    jbound = json{{"events", events},
                  {"binary_collisions", report->binary_collisions},
                  {"report", *report}};
  } catch (const morsenb::InsufficientData& e) {
    jbound = json{{"note", std::string("collision classification unavailable: ") + e.what()}};
  }
  morsenb::write_json_atomic(out / "index_bound.json", jbound);

  if (report)
    std::cout << "index bound: (d-2) * i(alpha) * B = " << report->lhs
              << " <= " << report->rhs << " : " << (report->holds ? "holds" : "VIOLATED") << "\n";
  std::cout << "artifacts in " << out.string() << "\n";

  if (seq.broke) {
    std::cerr << "continuation broke: " << seq.break_reason << "\n";
    return 1;
  }
  if (report && !report->holds) {
    std::cerr << "index bound violated\n";
    return 1;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// limit-sweep

struct SweepRow {
  double alpha = 0.0;
  double lambda = 0.0;
  double L = 0.0;
  int mesh = 0;
  double theory = std::numeric_limits<double>::quiet_NaN();
  double numeric = std::numeric_limits<double>::quiet_NaN();
  int i_alpha_lambda = -1;
  int count = 0;
  bool converged = false;
  std::string error;
};

void to_json(json& j, const SweepRow& r) {
  j = json{{"alpha", r.alpha},
           {"lambda", std::isinf(r.lambda) ? json("infinity") : json(r.lambda)},
           {"L", r.L},
           {"mesh", r.mesh},
           {"i_alpha_lambda", r.i_alpha_lambda},
           {"transverse_count", r.count},
           {"converged", r.converged},
           {"error", r.error}};
}

int cmd_limit_sweep(const CommonArgs& args) {
  reject_fault(args, "limit-sweep");
  const json cfg = load_config(args);
  check_keys(cfg, "limit-sweep config",
             {"alphas", "lambdas", "L", "mesh", "R", "mass_sum", "surrogate_Ls", "tail_correction"});
  // Default grid sticks to alpha = 1: there the pinned window resolves every
  // count. Near alpha = 2 the slowest mode's outer zeros sit exponentially
  // far out and the (L, 2L) acceptance test can report a count that is still
  // short; wider windows via config when sweeping that regime.
  const std::vector<double> alphas = get_or(cfg, "alphas", std::vector<double>{1.0});
  const double L = get_or(cfg, "L", 200.0);
  const int mesh = get_or(cfg, "mesh", 4000);
  const double R = get_or(cfg, "R", 1e6);
  const double mass_sum = get_or(cfg, "mass_sum", 1.0);
  const bool tail = get_or(cfg, "tail_correction", true);
  const std::vector<double> surrogate_Ls =
      get_or(cfg, "surrogate_Ls", std::vector<double>{50.0, 100.0, 200.0});

  std::vector<double> lambdas{0.0, 1.0, 3.0};
  if (cfg.contains("lambdas")) {
    lambdas.clear();
    for (const json& v : cfg.at("lambdas")) {
      if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s != "infinity" && s != "inf")
          throw morsenb::ParseError("limit-sweep config: lambda string must be \"infinity\"");
        lambdas.push_back(morsenb::kLambdaInfinity);
      } else {
        lambdas.push_back(v.get<double>());
      }
    }
  }

  if (mesh < 4) throw morsenb::InvalidArgument("limit-sweep: mesh must be >= 4");
  if (!(L > 0.0)) throw morsenb::InvalidArgument("limit-sweep: L must be positive");
  if (!(R > 1.0)) throw morsenb::InvalidArgument("limit-sweep: R must exceed 1");
  if (alphas.empty() || lambdas.empty())
    throw morsenb::InvalidArgument("limit-sweep: empty grid");
  for (double a : alphas)
    if (!(a > 0.0) || !(a < 2.0))
      throw morsenb::InvalidArgument("limit-sweep: alpha must lie in (0, 2)");
  for (double l : lambdas)
    if (!std::isinf(l) && !(l >= 0.0))
      throw morsenb::InvalidArgument("limit-sweep: lambda must be >= 0 or \"infinity\"");
  for (double sl : surrogate_Ls)
    if (!(sl > 0.0)) throw morsenb::InvalidArgument("limit-sweep: surrogate L must be positive");

  std::vector<SweepRow> rows;
  for (double a : alphas)
    for (double l : lambdas) {
      if (std::isinf(l)) {
        // The infinite-lambda operator has no finite window count to converge
        // to; the sweep records its growth over a ladder of truncations.
        for (double sl : surrogate_Ls) {
          SweepRow r;
          r.alpha = a;
          r.lambda = l;
          r.L = sl;
          r.mesh = std::max(4, static_cast<int>(std::llround(mesh * sl / L)));
          rows.push_back(r);
        }
      } else {
        SweepRow r;
        r.alpha = a;
        r.lambda = l;
        r.L = L;
        r.mesh = mesh;
        rows.push_back(r);
      }
    }

  auto compute = [&](SweepRow& r) {
    try {
      if (std::isinf(r.lambda)) {
        r.theory = std::numeric_limits<double>::infinity();
        r.numeric = std::numeric_limits<double>::infinity();
        r.i_alpha_lambda = -1;
        r.count = morsenb::detail::transverse_negative_count(r.alpha, r.lambda, mass_sum, r.L,
                                                             r.mesh);
        r.converged = true;
        return;
      }
      r.theory = morsenb::asymptotic_angle_theory(r.alpha, r.lambda);
      const morsenb::LimitOrbit orbit = morsenb::integrate_limit_orbit(
          r.alpha, r.lambda, mass_sum, morsenb::s_for_radius(r.alpha, mass_sum, R), 2);
      r.numeric = morsenb::asymptotic_angle_numeric(orbit, R, tail);
      r.i_alpha_lambda = morsenb::index_i_lambda(r.alpha, r.lambda);
      const int c1 =
          morsenb::detail::transverse_negative_count(r.alpha, r.lambda, mass_sum, r.L, r.mesh);
      const int c2 = morsenb::detail::transverse_negative_count(r.alpha, r.lambda, mass_sum,
                                                                2.0 * r.L, 2 * r.mesh);
      r.count = c1;
      r.converged = (c1 == c2);
    } catch (const morsenb::Error& e) {
      r.error = e.what();
    }
  };

  const int workers =
      std::max(1, std::min<int>(args.workers, static_cast<int>(rows.size())));
  if (workers == 1) {
    for (SweepRow& r : rows) compute(r);
  } else {
    std::atomic<size_t> cursor{0};
    auto drain = [&] {
      for (size_t k; (k = cursor.fetch_add(1)) < rows.size();) compute(rows[k]);
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(drain);
    for (std::thread& t : pool) t.join();
  }

  std::string csv = "alpha,lambda,theory_angle,numeric_angle,i_alpha_lambda,transverse_count,L,mesh\n";
  bool violated = false, errored = false;
  for (const SweepRow& r : rows) {
    csv += morsenb::csv_join({morsenb::csv_cell(r.alpha), morsenb::csv_cell(r.lambda),
                              morsenb::csv_cell(r.theory), morsenb::csv_cell(r.numeric),
                              morsenb::csv_cell(r.i_alpha_lambda), morsenb::csv_cell(r.count),
                              morsenb::csv_cell(r.L), morsenb::csv_cell(r.mesh)}) +
           "\n";
    if (!r.error.empty()) {
      errored = true;
      std::cerr << "row alpha=" << r.alpha << " lambda=" << r.lambda << " failed: " << r.error
                << "\n";
      continue;
    }
    const bool bound_ok = !r.converged || r.i_alpha_lambda < 0 || r.count >= r.i_alpha_lambda;
    if (!bound_ok) violated = true;
    std::cout << "alpha=" << r.alpha << "  lambda=" << r.lambda << "  count=" << r.count
              << "  i=" << r.i_alpha_lambda << (r.converged ? "" : "  (count still moving)")
              << (bound_ok ? "" : "  BOUND VIOLATED") << "\n";
  }

  const std::filesystem::path out(args.out);
  morsenb::write_text_atomic(out / "sweep.csv", csv);
  morsenb::write_json_atomic(out / "sweep.json",
                             json{{"rows", rows},
                                  {"R", R},
                                  {"mass_sum", mass_sum},
                                  {"tail_correction", tail},
                                  {"bound_violated", violated}});
  std::cout << "sweep table in " << (out / "sweep.csv").string() << "\n";
  if (violated) {
    std::cerr << "transverse count fell below the index bound on a converged entry\n";
    return 1;
  }
  return errored ? 1 : 0;
}

// ---------------------------------------------------------------------------
// blowup

int cmd_blowup(const CommonArgs& args) {
  reject_fault(args, "blowup");
  const json cfg = load_config(args);
  check_keys(cfg, "blowup config",
             {"sequence", "last_profiles", "expect", "rule", "direction", "quadform"});
  if (!cfg.contains("sequence"))
    throw morsenb::InvalidArgument("blowup: config must name a stored sequence directory");
  const std::string seq_dir = cfg.at("sequence").get<std::string>();
  const int last_profiles = get_or(cfg, "last_profiles", 4);
  if (last_profiles < 1) throw morsenb::InvalidArgument("blowup: last_profiles must be >= 1");

  morsenb::ThresholdRule rule;
  if (cfg.contains("rule")) {
    const json jr = cfg.at("rule");
    check_keys(jr, "blowup config rule",
               {"collapse_ratio", "merge_cells", "floor_factor", "infinite_factor", "refine",
                "refine_nodes", "refine_max_records", "refine_tol", "refine_max_iter"});
    rule.collapse_ratio = get_or(jr, "collapse_ratio", rule.collapse_ratio);
    rule.merge_cells = get_or(jr, "merge_cells", rule.merge_cells);
    rule.floor_factor = get_or(jr, "floor_factor", rule.floor_factor);
    rule.infinite_factor = get_or(jr, "infinite_factor", rule.infinite_factor);
    rule.refine = get_or(jr, "refine", rule.refine);
    rule.refine_nodes = get_or(jr, "refine_nodes", rule.refine_nodes);
    rule.refine_max_records = get_or(jr, "refine_max_records", rule.refine_max_records);
    rule.refine_tol = get_or(jr, "refine_tol", rule.refine_tol);
    rule.refine_max_iter = get_or(jr, "refine_max_iter", rule.refine_max_iter);
  }

  morsenb::BlowUpOptions bopt;
  if (cfg.contains("expect")) {
    const std::string want = cfg.at("expect").get<std::string>();
    if (want == "finite")
      bopt.expect = morsenb::BlowUpCase::finite_lambda;
    else if (want == "infinite")
      bopt.expect = morsenb::BlowUpCase::infinite_lambda;
    else
      throw morsenb::InvalidArgument("blowup: expect must be \"finite\" or \"infinite\"");
  }

  morsenb::DirectionOptions dopt;
  if (cfg.contains("direction")) {
    const json jd = cfg.at("direction");
    check_keys(jd, "blowup config direction", {"l_lo", "r_hi", "min_nodes", "conic_pullback"});
    dopt.l_lo = get_or(jd, "l_lo", dopt.l_lo);
    dopt.r_hi = get_or(jd, "r_hi", dopt.r_hi);
    dopt.min_nodes = get_or(jd, "min_nodes", dopt.min_nodes);
    dopt.conic_pullback = get_or(jd, "conic_pullback", dopt.conic_pullback);
  }

  double support = 6.0;
  morsenb::RescaledFormOptions qopt;
  if (cfg.contains("quadform")) {
    const json jq = cfg.at("quadform");
    check_keys(jq, "blowup config quadform", {"support", "tail", "quad_points"});
    support = get_or(jq, "support", support);
    qopt.tail = get_or(jq, "tail", qopt.tail);
    qopt.quad_points = get_or(jq, "quad_points", qopt.quad_points);
  }
  const morsenb::TransverseProfile profile = morsenb::transverse_bump(support);

  const morsenb::WeakCriticalSequence seq = morsenb::load_sequence(seq_dir);
  const std::vector<morsenb::CollisionEvent> events = morsenb::detect_collisions(seq, rule);

  const std::filesystem::path out(args.out);
  morsenb::write_json_atomic(out / "events.json",
                             json{{"events", events},
                                  {"n_events", events.size()},
                                  {"n_binary", morsenb::count_binary_events(events)}});
  if (events.empty()) {
    std::cerr << "no collision events in the stored sequence\n";
    return 1;
  }

  const int n_records = static_cast<int>(seq.records.size());
  for (size_t e = 0; e < events.size(); ++e) {
    const morsenb::CollisionEvent& ev = events[e];
    const std::filesystem::path edir = out / ("event_" + std::to_string(e + 1));
    json manifest{{"event", ev}};
    std::cout << "event " << e + 1 << ": cluster size " << ev.cluster.size() << " at t=" << ev.time
              << ", lambda_fit="
              << (std::isinf(ev.lambda_fit) ? std::string("infinity")
                                            : morsenb::csv_cell(ev.lambda_fit))
              << (ev.isolated ? ", isolated" : ", NOT isolated") << "\n";

    if (ev.kind != morsenb::CollisionKind::binary) {
      manifest["note"] = "higher-order cluster: binary rescalings not emitted";
      morsenb::write_json_atomic(edir / "blowup.json", manifest);
      continue;
    }

    json jprofiles = json::array();
    for (int k = std::max(1, n_records - last_profiles + 1); k <= n_records; ++k) {
      // A forced wrong case must abort the run; anything else is recorded and
      // the remaining stages still get their files.
      try {
        const morsenb::BlowUpProfile prof = morsenb::blow_up(seq, ev, k, bopt);
        std::ostringstream os;
        morsenb::write_profile_csv(prof, os);
        const std::string file = "profile_n" + std::to_string(k) + ".csv";
        morsenb::write_text_atomic(edir / file, os.str());
        json jp = prof;
        jp["file"] = file;
        jprofiles.push_back(std::move(jp));
      } catch (const morsenb::CaseMismatch&) {
        throw;
      } catch (const morsenb::Error& err) {
        jprofiles.push_back(json{{"n", k}, {"error", err.what()}});
      }
    }
    manifest["profiles"] = std::move(jprofiles);

    for (const auto side : {morsenb::CollisionSide::before, morsenb::CollisionSide::after}) {
      const char* key = side == morsenb::CollisionSide::before ? "direction_minus"
                                                               : "direction_plus";
      try {
        manifest[key] = morsenb::collision_direction(seq, ev, side, dopt);
      } catch (const morsenb::Error& err) {
        manifest[key] = json{{"error", err.what()}};
      }
    }

    if (std::isinf(ev.lambda_fit)) {
      manifest["quadform"] = json{{"note", "infinite-lambda event: no finite limit form"}};
    } else {
      try {
        manifest["quadform"] = morsenb::restricted_quadform_convergence(seq, ev, profile, qopt);
      } catch (const morsenb::Error& err) {
        manifest["quadform"] = json{{"error", err.what()}};
      }
    }

    morsenb::write_json_atomic(edir / "blowup.json", manifest);
  }

  std::cout << "blow-up artifacts in " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variational n-body toolkit"};
  app.require_subcommand(1);

  CommonArgs a_check, a_cont, a_sweep, a_blow;
  CLI::App* c_check = app.add_subcommand("check", "FD and identity invariant suites");
  add_common(c_check, a_check);
  CLI::App* c_cont =
      app.add_subcommand("continuation", "eps_n -> 0 continuation from a seed path");
  add_common(c_cont, a_cont);
  CLI::App* c_sweep =
      app.add_subcommand("limit-sweep", "asymptotic angle and transverse index sweep");
  add_common(c_sweep, a_sweep);
  CLI::App* c_blow =
      app.add_subcommand("blowup", "rescaled collision analysis of a stored sequence");
  add_common(c_blow, a_blow);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto guarded = [](auto&& body) -> int {
    try {
      return body();
    } catch (const morsenb::InvalidArgument& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const morsenb::ParseError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const morsenb::IoError& e) {
      std::cerr << "io error: " << e.what() << "\n";
      return 2;
    } catch (const morsenb::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  };

  if (*c_check) return guarded([&] { return cmd_check(a_check); });
  if (*c_cont) return guarded([&] { return cmd_continuation(a_cont); });
  if (*c_sweep) return guarded([&] { return cmd_limit_sweep(a_sweep); });
  return guarded([&] { return cmd_blowup(a_blow); });
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "morsenb/collision.hpp"
#include "morsenb/jsonio.hpp"

using namespace morsenb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("morsenb_jsonio_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

DiscretePath axis_pair_path(const MassSystem& sys, double delta, double t0, int m) {
  std::vector<Config> nodes(static_cast<size_t>(m));
  for (int k = 0; k < m; ++k) {
    const double t = -1.0 + 2.0 * k / (m - 1);
    const double r = std::hypot(delta, t - t0);
    Config q(2, sys.d);
    q.setZero();
    q(0, 0) = -0.5 * r;
    q(1, 0) = 0.5 * r;
    nodes[static_cast<size_t>(k)] = q;
  }
  return make_path_seeded(sys, std::move(nodes), -1.0, 1.0);
}

WeakCriticalSequence synthetic_sequence() {
  const MassSystem sys(3, 1.0, Eigen::Vector2d(1.0, 1.0));
  WeakCriticalSequence seq;
  for (int n = 1; n <= 3; ++n) {
    const double delta = std::pow(4.0, -n);
    CriticalPointRecord rec;
    rec.path = axis_pair_path(sys, delta, 0.25, 201);
    rec.eps = delta;
    rec.action = action_value(rec.path, rec.eps);
    rec.residual_h1dual = 1e-10 * n;
    rec.morse_index = n;
    rec.negative_eigenvalues.assign(static_cast<size_t>(n), -1.0);
    rec.converged = true;
    rec.iterations = 5 + n;
    rec.pair_separations = all_pair_separations(rec.path);
    rec.closest = rec.pair_separations.front();
    seq.eps_schedule.push_back(rec.eps);
    seq.records.push_back(std::move(rec));
  }
  seq.limit_path = seq.records.back().path;
  seq.action_bound = 42.0;
  seq.bound_supplied = true;
  LambdaEstimate est;
  est.body_i = 0;
  est.body_j = 1;
  est.ratios = {1.0, 1.0, 1.0};
  est.lambda = 1.0;
  seq.lambda_estimates.push_back(est);
  seq.index_liminf = 3;
  seq.tail = 2;
  seq.supnorm_gaps = {0.1, 0.05, 0.02};
  seq.supnorm_tail_decreasing = true;
  return seq;
}

}  // namespace

TEST_CASE("atomic write replaces content and leaves no temp file", "[jsonio]") {
  TempDir tmp;
  const fs::path file = tmp.path / "nested" / "a.txt";
  write_text_atomic(file, "first");
  write_text_atomic(file, "second");
  std::ifstream is(file);
  std::string got((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(got == "second");
  CHECK_FALSE(fs::exists(file.string() + ".tmp"));
}

TEST_CASE("csv cells round trip and spell infinities", "[jsonio]") {
  CHECK(csv_cell(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(csv_cell(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(csv_cell(7) == "7");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(csv_cell(x)) == x);
  CHECK(csv_join({"a", "b", "c"}) == "a,b,c");
}

TEST_CASE("sequence save and load round trip", "[jsonio]") {
  TempDir tmp;
  const WeakCriticalSequence seq = synthetic_sequence();
  save_sequence(tmp.path / "seq", seq);

  REQUIRE(fs::exists(tmp.path / "seq" / "sequence.json"));
  REQUIRE(fs::exists(tmp.path / "seq" / "records" / "record_03.json"));

  const WeakCriticalSequence back = load_sequence(tmp.path / "seq");
  REQUIRE(back.records.size() == seq.records.size());
  CHECK(back.eps_schedule == seq.eps_schedule);
  CHECK(back.action_bound == seq.action_bound);
  CHECK(back.bound_supplied == seq.bound_supplied);
  CHECK(back.index_liminf == seq.index_liminf);
  CHECK(back.tail == seq.tail);
  CHECK(back.supnorm_gaps == seq.supnorm_gaps);
  CHECK(back.supnorm_tail_decreasing == seq.supnorm_tail_decreasing);
  REQUIRE(back.lambda_estimates.size() == 1);
  CHECK(back.lambda_estimates[0].lambda == seq.lambda_estimates[0].lambda);

  for (size_t n = 0; n < seq.records.size(); ++n) {
    const CriticalPointRecord& a = seq.records[n];
    const CriticalPointRecord& b = back.records[n];
    CHECK(b.eps == a.eps);
    CHECK(b.action.total == a.action.total);
    CHECK(b.morse_index == a.morse_index);
    CHECK(b.iterations == a.iterations);
    CHECK(b.closest.delta == a.closest.delta);
    REQUIRE(b.path.m_nodes() == a.path.m_nodes());
    double gap = 0.0;
    for (int k = 0; k < a.path.m_nodes(); ++k)
      gap = std::max(gap, (b.path.nodes[static_cast<size_t>(k)] -
                           a.path.nodes[static_cast<size_t>(k)])
                              .cwiseAbs()
                              .maxCoeff());
    CHECK(gap == 0.0);
  }

  // The loaded sequence must drive the collision pipeline identically.
  const auto ev_a = detect_collisions(seq);
  const auto ev_b = detect_collisions(back);
  REQUIRE(ev_a.size() == ev_b.size());
  REQUIRE(ev_a.size() == 1);
  CHECK(ev_b[0].cluster == ev_a[0].cluster);
  CHECK(ev_b[0].time == ev_a[0].time);
  CHECK(ev_b[0].lambda_fit == ev_a[0].lambda_fit);
}

TEST_CASE("loading rejects missing and corrupt stores", "[jsonio]") {
  TempDir tmp;
  CHECK_THROWS_AS(load_sequence(tmp.path / "nope"), IoError);

  const WeakCriticalSequence seq = synthetic_sequence();
  save_sequence(tmp.path / "seq", seq);
  write_text_atomic(tmp.path / "seq" / "records" / "record_02.json", "{\"eps\": 1.0}");
  CHECK_THROWS_AS(load_sequence(tmp.path / "seq"), ParseError);

  write_text_atomic(tmp.path / "seq" / "records" / "record_02.json", "{broken");
  CHECK_THROWS_AS(load_sequence(tmp.path / "seq"), ParseError);
}

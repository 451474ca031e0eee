#pragma once

// On-disk artifact emission: atomic text/JSON writes, the directory layout of
// a stored continuation sequence, and number formatting for CSV cells. Writes
// go through a temp file in the destination directory followed by a rename,
// so a crash mid-write never leaves a torn file behind.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "morsenb/continuation.hpp"
#include "morsenb/errors.hpp"
#include "nlohmann/json.hpp"

namespace morsenb {

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os << text;
    os.flush();
    if (!os) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " onto " + path.string() + ": " +
                        ec.message());
}

inline void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

// Shortest round-trip decimal for a CSV cell. Non-finite values print as
// "inf"/"-inf"/"nan" (the sweep table uses "inf" for the lambda = infinity
// surrogate rows).
inline std::string csv_cell(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0.0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::string csv_cell(int x) { return std::to_string(x); }

inline std::string csv_join(const std::vector<std::string>& cells) {
  std::string line;
  for (size_t k = 0; k < cells.size(); ++k) {
    if (k) line += ',';
    line += cells[k];
  }
  return line;
}

namespace detail {

inline std::string record_file_name(size_t n) {  // 1-based
  char buf[32];
  std::snprintf(buf, sizeof buf, "record_%02zu.json", n);
  return buf;
}

}  // namespace detail

// Layout of a stored sequence under dir/:
//   sequence.json             summary: per-record scalars, limit path, fits
//   records/record_01.json    full records in schedule order, paths included
inline void save_sequence(const std::filesystem::path& dir, const WeakCriticalSequence& seq) {
  std::filesystem::create_directories(dir / "records");
  write_json_atomic(dir / "sequence.json", nlohmann::json(seq));
  for (size_t n = 0; n < seq.records.size(); ++n)
    write_json_atomic(dir / "records" / detail::record_file_name(n + 1),
                      nlohmann::json(seq.records[n]));
}

inline WeakCriticalSequence load_sequence(const std::filesystem::path& dir) {
  const nlohmann::json j = read_json_file(dir / "sequence.json");
  WeakCriticalSequence seq;
  size_t n_records = 0;
  try {
    seq.eps_schedule = j.at("eps_schedule").get<std::vector<double>>();
    seq.limit_path = j.at("limit_path").get<DiscretePath>();
    seq.action_bound = j.at("action_bound").get<double>();
    seq.bound_supplied = j.at("bound_supplied").get<bool>();
    seq.lambda_estimates = j.at("lambda_estimates").get<std::vector<LambdaEstimate>>();
    seq.index_liminf = j.at("index_liminf").get<int>();
    seq.tail = j.at("tail").get<int>();
    seq.supnorm_gaps = j.at("supnorm_gaps").get<std::vector<double>>();
    seq.supnorm_tail_decreasing = j.at("supnorm_tail_decreasing").get<bool>();
    seq.broke = j.at("broke").get<bool>();
    seq.break_reason = j.at("break_reason").get<std::string>();
    n_records = j.at("records").size();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "sequence.json").string() + ": " + e.what());
  }
  seq.records.reserve(n_records);
  for (size_t n = 1; n <= n_records; ++n) {
    const std::filesystem::path file = dir / "records" / detail::record_file_name(n);
    try {
      seq.records.push_back(read_json_file(file).get<CriticalPointRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(file.string() + ": " + e.what());
    }
  }
  return seq;
}

}  // namespace morsenb

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "morsenb/errors.hpp"
#include "nlohmann/json.hpp"

namespace morsenb {

using Config = Eigen::MatrixXd;  // one row per body, d columns

// No pair of bodies may come closer than this in any evaluated configuration.
inline constexpr double kDistanceFloor = 1e-14;

// Masses, spatial dimension and the weak-force exponent alpha in (0,2).
// The pair potential is sum_{i<j} m_i m_j / r_ij^alpha, optionally augmented
// by eps * sum m_i m_j / r_ij^2 (the strong-force regularization).
struct MassSystem {
  int d = 0;
  double alpha = 0.0;
  Eigen::VectorXd masses;

  MassSystem() = default;
  MassSystem(int dim, double alpha_, Eigen::VectorXd m)
      : d(dim), alpha(alpha_), masses(std::move(m)) {
    validate();
  }

  int n_bodies() const { return static_cast<int>(masses.size()); }
  double mass_sum() const { return masses.sum(); }

  void validate() const {
    if (d < 2) throw InvalidArgument("MassSystem: dimension must be >= 2, got " + std::to_string(d));
    if (n_bodies() < 2)
      throw InvalidArgument("MassSystem: need at least 2 bodies, got " + std::to_string(n_bodies()));
    if (!(alpha > 0.0 && alpha < 2.0))
      throw InvalidArgument("MassSystem: alpha must lie in (0,2), got " + std::to_string(alpha));
    for (int i = 0; i < n_bodies(); ++i)
      if (!(masses[i] > 0.0) || !std::isfinite(masses[i]))
        throw InvalidArgument("MassSystem: masses must be positive and finite");
  }

  void check_config(const Config& q, const char* where) const {
    if (q.rows() != n_bodies() || q.cols() != d)
      throw InvalidArgument(std::string(where) + ": configuration shape mismatch, expected " +
                            std::to_string(n_bodies()) + "x" + std::to_string(d));
  }

  // Weighted barycenter sum_i m_i q_i (not divided by the total mass).
  Eigen::RowVectorXd moment(const Config& q) const { return masses.transpose() * q; }

  bool operator==(const MassSystem& o) const {
    return d == o.d && alpha == o.alpha && masses.size() == o.masses.size() && masses == o.masses;
  }
};

inline void to_json(nlohmann::json& j, const MassSystem& s) {
  j = nlohmann::json{{"d", s.d}, {"alpha", s.alpha}, {"masses", std::vector<double>(s.masses.begin(), s.masses.end())}};
}

inline void from_json(const nlohmann::json& j, MassSystem& s) {
  s.d = j.at("d").get<int>();
  s.alpha = j.at("alpha").get<double>();
  auto m = j.at("masses").get<std::vector<double>>();
  s.masses = Eigen::Map<Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.validate();
}

// Configurations serialize as row-major N x d nested arrays.
inline nlohmann::json config_to_json(const Config& q) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index a = 0; a < q.cols(); ++a) row.push_back(q(i, a));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Config config_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw ParseError("configuration: expected a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  const auto d = static_cast<Eigen::Index>(j.at(0).size());
  Config q(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j.at(static_cast<size_t>(i));
    if (static_cast<Eigen::Index>(row.size()) != d)
      throw ParseError("configuration: ragged rows");
    for (Eigen::Index a = 0; a < d; ++a) q(i, a) = row.at(static_cast<size_t>(a)).get<double>();
  }
  return q;
}

}  // namespace morsenb

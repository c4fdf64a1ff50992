#pragma once

#include <Eigen/Dense>

#include <optional>
#include <vector>

#include "json.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/factor_model.hpp"

namespace tebfar {

using Json = nlohmann::json;

inline Json to_json_matrix(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

inline Json to_json_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::MatrixXd matrix_from_json(const Json& j, Eigen::Index rows, Eigen::Index cols,
                                        const char* field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw InvalidInput(std::string("field '") + field + "' must have " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw InvalidInput(std::string("field '") + field + "' row " + std::to_string(i) +
                         " must have " + std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline Eigen::VectorXd vector_from_json(const Json& j, Eigen::Index size, const char* field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
    throw InvalidInput(std::string("field '") + field + "' must have " + std::to_string(size) + " entries");
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

/// {p, k, lambda, sigma_diag, y_variance_fixed[, xi, delta]}
inline Json model_to_json(const FactorModel& m, const std::optional<MgpState>& mgp = std::nullopt) {
  Json j;
  j["p"] = m.p();
  j["k"] = m.k();
  j["lambda"] = to_json_matrix(m.lambda);
  j["sigma_diag"] = to_json_vector(m.sigma_diag);
  j["y_variance_fixed"] = m.y_variance_fixed;
  if (mgp) {
    j["xi"] = to_json_matrix(mgp->xi);
    j["delta"] = to_json_vector(mgp->delta);
  }
  return j;
}

inline FactorModel model_from_json(const Json& j) {
  try {
    const auto p = j.at("p").get<Eigen::Index>();
    const auto k = j.at("k").get<Eigen::Index>();
    if (p < 0 || k < 0) throw InvalidInput("model JSON: p and k must be nonnegative");
    FactorModel m;
    m.lambda = matrix_from_json(j.at("lambda"), p + 1, k, "lambda");
    m.sigma_diag = vector_from_json(j.at("sigma_diag"), p + 1, "sigma_diag");
    m.y_variance_fixed = j.value("y_variance_fixed", false);
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("model JSON: ") + e.what());
  }
}

inline std::optional<MgpState> mgp_from_json(const Json& j) {
  if (!j.contains("xi") || !j.contains("delta")) return std::nullopt;
  const auto p = j.at("p").get<Eigen::Index>();
  const auto k = j.at("k").get<Eigen::Index>();
  MgpState s;
  s.xi = matrix_from_json(j.at("xi"), p + 1, k, "xi");
  s.delta = vector_from_json(j.at("delta"), k, "delta");
  s.recompute_tau();
  return s;
}

}  // namespace tebfar

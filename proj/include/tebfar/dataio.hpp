#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tebfar/errors.hpp"
#include "tebfar/rng.hpp"

namespace tebfar {

struct Standardization {
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_sd;
  double y_mean = 0.0;
  double y_sd = 1.0;
};

/// Predictors and response in memory, with provenance and (once standardized)
/// the parameters that produced the current scale.
struct Dataset {
  std::vector<std::string> predictor_names;
  std::string response_name = "y";
  Eigen::MatrixXd x;  // n x p
  Eigen::VectorXd y;  // n
  std::optional<Standardization> standardization;
  std::string provenance;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }

  /// n x (p+1) matrix with the response as the last column.
  Eigen::MatrixXd joint() const {
    Eigen::MatrixXd z(x.rows(), x.cols() + 1);
    z << x, y;
    return z;
  }

  Dataset rows(const std::vector<Eigen::Index>& idx) const {
    Dataset out;
    out.predictor_names = predictor_names;
    out.response_name = response_name;
    out.standardization = standardization;
    out.provenance = provenance;
    out.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.x.row(static_cast<Eigen::Index>(r)) = x.row(idx[r]);
      out.y(static_cast<Eigen::Index>(r)) = y(idx[r]);
    }
    return out;
  }
};

inline std::vector<std::string> default_predictor_names(Eigen::Index p) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

inline Dataset make_dataset(Eigen::MatrixXd x, Eigen::VectorXd y, std::string provenance = {}) {
  if (x.rows() != y.size()) throw DimensionMismatch("predictor and response row counts differ");
  Dataset d;
  d.predictor_names = default_predictor_names(x.cols());
  d.x = std::move(x);
  d.y = std::move(y);
  d.provenance = std::move(provenance);
  return d;
}

/// Splits the last column off a joint n x (p+1) matrix.
inline Dataset dataset_from_joint(const Eigen::MatrixXd& z, std::string provenance = {}) {
  const Eigen::Index p = z.cols() - 1;
  return make_dataset(z.leftCols(p), z.col(p), std::move(provenance));
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return std::string(s);
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

inline bool is_na_token(std::string_view s) {
  if (s.empty()) return true;
  auto lower = [](std::string_view t) {
    std::string r(t);
    std::transform(r.begin(), r.end(), r.begin(), [](unsigned char c) { return std::tolower(c); });
    return r;
  };
  const std::string l = lower(s);
  return l == "na" || l == "nan";
}

// Strict decimal parse; the whole token must be consumed.
inline std::optional<double> parse_decimal(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

/// Reads a headed CSV. Cells that are empty, "NA" or "NaN" (any case) count as
/// missing; with drop_incomplete the row is skipped, otherwise the first bad
/// cell raises ParseError. Any other unparseable cell is treated the same way.
inline Dataset read_csv(std::istream& in, const std::string& response_column, bool drop_incomplete,
                        const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("CSV '" + source + "' has no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  for (auto f : detail::split_fields(line)) header.push_back(detail::unquote(f));
  const auto resp_it = std::find(header.begin(), header.end(), response_column);
  if (resp_it == header.end()) throw MissingColumn(response_column);
  const std::size_t resp = static_cast<std::size_t>(resp_it - header.begin());

  std::vector<std::vector<double>> rows;
  std::size_t data_row = 0;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++data_row;
    const auto fields = detail::split_fields(line);
    std::vector<double> values(header.size());
    bool ok = fields.size() == header.size();
    if (!ok && !drop_incomplete)
      throw ParseError(data_row, fields.size() < header.size() ? header[fields.size()] : header.back(),
                       std::string(line));
    for (std::size_t c = 0; ok && c < header.size(); ++c) {
      const std::string cell = detail::unquote(fields[c]);
      const auto v = detail::is_na_token(detail::trim(cell)) ? std::nullopt : detail::parse_decimal(cell);
      if (!v) {
        if (!drop_incomplete) throw ParseError(data_row, header[c], std::string(fields[c]));
        ok = false;
      } else {
        values[c] = *v;
      }
    }
    if (ok)
      rows.push_back(std::move(values));
    else
      ++dropped;
  }
  if (rows.empty()) throw EmptyAfterFiltering("'" + source + "'");

  Dataset d;
  d.response_name = response_column;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != resp) d.predictor_names.push_back(header[c]);
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(header.size() - 1);
  d.x.resize(n, p);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == resp)
        d.y(i) = r[c];
      else
        d.x(i, j++) = r[c];
    }
  }
  d.provenance = source + (drop_incomplete ? "; complete cases (" + std::to_string(dropped) +
                                                 " rows dropped)"
                                           : "");
  return d;
}

inline Dataset load_csv(const std::string& path, const std::string& response_column, bool drop_incomplete) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_csv(in, response_column, drop_incomplete, path);
}

/// The named columns of a headed CSV, in the order requested. Every cell must parse.
inline Eigen::MatrixXd read_columns(std::istream& in, const std::vector<std::string>& columns,
                                    const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("CSV '" + source + "' has no header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header;
  for (auto f : detail::split_fields(line)) header.push_back(detail::unquote(f));
  std::vector<std::size_t> pick;
  for (const auto& c : columns) {
    const auto it = std::find(header.begin(), header.end(), c);
    if (it == header.end()) throw MissingColumn(c);
    pick.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<double> values;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    ++data_row;
    const auto fields = detail::split_fields(line);
    for (std::size_t c = 0; c < pick.size(); ++c) {
      if (pick[c] >= fields.size()) throw ParseError(data_row, columns[c], std::string(line));
      const auto v = detail::parse_decimal(detail::unquote(fields[pick[c]]));
      if (!v) throw ParseError(data_row, columns[c], std::string(fields[pick[c]]));
      values.push_back(*v);
    }
  }
  if (data_row == 0) throw EmptyAfterFiltering("'" + source + "' has no data rows");
  const auto cols = static_cast<Eigen::Index>(columns.size());
  const auto rows = static_cast<Eigen::Index>(data_row);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values[static_cast<std::size_t>(i * cols + j)];
  return m;
}

inline Eigen::MatrixXd load_columns(const std::string& path, const std::vector<std::string>& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_columns(in, columns, path);
}

/// Predictors first, response last, 17 significant digits.
inline void write_csv(std::ostream& out, const Dataset& d) {
  for (const auto& name : d.predictor_names) out << name << ',';
  out << d.response_name << '\n';
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    for (Eigen::Index j = 0; j < d.p(); ++j) out << detail::format_double(d.x(i, j)) << ',';
    out << detail::format_double(d.y(i)) << '\n';
  }
}

inline void save_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_csv(out, d);
}

namespace detail {

inline std::pair<double, double> mean_sd(const Eigen::VectorXd& v, const std::string& name) {
  const Eigen::Index n = v.size();
  if (n < 2) throw ZeroVariance(name);
  const double mean = v.mean();
  const double var = (v.array() - mean).square().sum() / static_cast<double>(n - 1);
  const double sd = std::sqrt(var);
  if (!(sd > 0.0) || sd <= 1e-300) throw ZeroVariance(name);
  return {mean, sd};
}

}  // namespace detail

/// Per-column z-scores (sample standard deviation, n - 1 denominator).
inline std::pair<Dataset, Standardization> standardize(const Dataset& data) {
  Standardization s;
  s.x_mean.resize(data.p());
  s.x_sd.resize(data.p());
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    const auto [m, sd] = detail::mean_sd(data.x.col(j), data.predictor_names.at(static_cast<std::size_t>(j)));
    s.x_mean(j) = m;
    s.x_sd(j) = sd;
  }
  std::tie(s.y_mean, s.y_sd) = detail::mean_sd(data.y, data.response_name);
  Dataset out = data;
  out.x = (data.x.rowwise() - s.x_mean.transpose()).array().rowwise() / s.x_sd.transpose().array();
  out.y = (data.y.array() - s.y_mean) / s.y_sd;
  out.standardization = s;
  return {std::move(out), std::move(s)};
}

inline Dataset apply_standardization(const Standardization& s, const Dataset& data) {
  if (data.p() != s.x_mean.size()) throw DimensionMismatch("standardization parameters do not match data");
  Dataset out = data;
  out.x = (data.x.rowwise() - s.x_mean.transpose()).array().rowwise() / s.x_sd.transpose().array();
  out.y = (data.y.array() - s.y_mean) / s.y_sd;
  out.standardization = s;
  return out;
}

inline Eigen::MatrixXd apply_standardization_x(const Standardization& s, const Eigen::MatrixXd& x) {
  if (x.cols() != s.x_mean.size()) throw DimensionMismatch("standardization parameters do not match data");
  return (x.rowwise() - s.x_mean.transpose()).array().rowwise() / s.x_sd.transpose().array();
}

inline Eigen::VectorXd unstandardize_predictions(const Standardization& s, const Eigen::VectorXd& y_hat) {
  return (y_hat.array() * s.y_sd + s.y_mean).matrix();
}

/// Uniformly random partition into n_train training rows and the rest.
inline std::pair<Dataset, Dataset> split(const Dataset& data, Eigen::Index n_train, std::uint64_t seed) {
  const Eigen::Index n = data.n();
  if (n_train < 1 || n_train >= n)
    throw InvalidInput("split: need 1 <= n_train < n (n_train = " + std::to_string(n_train) +
                       ", n = " + std::to_string(n) + ")");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Eigen::Index> train(idx.begin(), idx.begin() + n_train);
  std::vector<Eigen::Index> test(idx.begin() + n_train, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {data.rows(train), data.rows(test)};
}

inline void write_predictions(std::ostream& out, const Eigen::VectorXd& y_hat) {
  out << "row_index,y_hat\n";
  for (Eigen::Index i = 0; i < y_hat.size(); ++i) out << i << ',' << detail::format_double(y_hat(i)) << '\n';
}

struct ResultRow {
  std::string method;
  Eigen::Index ntrain = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
};

inline void write_results(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "method,ntrain,seed,mse\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.ntrain << ',' << r.seed << ',' << detail::format_double(r.mse) << '\n';
}

}  // namespace tebfar

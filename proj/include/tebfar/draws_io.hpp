#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/gibbs.hpp"
#include "tebfar/serialize.hpp"

// On-disk form of PosteriorDraws: a JSON manifest next to a flat CSV table with
// one row per retained draw. Field names are described in
// docs/draws_manifest.schema.json.
namespace tebfar {

inline constexpr const char* kManifestFormat = "tebfar-draws";
inline constexpr int kManifestVersion = 1;

struct CvRecord {
  double sigma_hat = 0.0;
  int n_folds = 0;
  std::string curve_file;
};

/// Everything `fit` persists besides the draws themselves.
struct FitRecord {
  std::vector<std::string> predictor_names;
  std::string response_name = "y";
  std::optional<Standardization> standardization;
  std::optional<CvRecord> cv;
  std::string data_source;
};

inline Json config_to_json(const SamplerConfig& c, Eigen::Index p) {
  Json j;
  j["iterations"] = c.iterations;
  j["burn_in"] = c.burn_in;
  j["thin"] = c.thin;
  j["k_max"] = c.truncation(p);
  j["seed"] = c.seed;
  j["mode"] = c.mode.fixed() ? "tebfar" : "jbfm";
  if (c.mode.fixed()) j["sigma_y2"] = c.mode.sigma_y2;
  j["hyper"] = {{"a1", c.hyper.a1},           {"a_rest", c.hyper.a_rest},
                {"xi_shape", c.hyper.xi_shape}, {"xi_rate", c.hyper.xi_rate},
                {"sigma_shape", c.hyper.sigma_shape}, {"sigma_rate", c.hyper.sigma_rate}};
  return j;
}

inline SamplerConfig config_from_json(const Json& j) {
  SamplerConfig c;
  c.iterations = j.at("iterations").get<int>();
  c.burn_in = j.at("burn_in").get<int>();
  c.thin = j.at("thin").get<int>();
  c.k_max = j.at("k_max").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto mode = j.at("mode").get<std::string>();
  if (mode == "tebfar") c.mode = SamplerMode::tebfar(j.at("sigma_y2").get<double>());
  else if (mode == "jbfm") c.mode = SamplerMode::jbfm();
  else throw InvalidInput("manifest: unknown mode '" + mode + "'");
  if (j.contains("hyper")) {
    const Json& h = j["hyper"];
    c.hyper.a1 = h.at("a1").get<double>();
    c.hyper.a_rest = h.at("a_rest").get<double>();
    c.hyper.xi_shape = h.at("xi_shape").get<double>();
    c.hyper.xi_rate = h.at("xi_rate").get<double>();
    c.hyper.sigma_shape = h.at("sigma_shape").get<double>();
    c.hyper.sigma_rate = h.at("sigma_rate").get<double>();
  }
  return c;
}

inline Json standardization_to_json(const Standardization& s) {
  return {{"x_mean", to_json_vector(s.x_mean)},
          {"x_sd", to_json_vector(s.x_sd)},
          {"y_mean", s.y_mean},
          {"y_sd", s.y_sd}};
}

inline Standardization standardization_from_json(const Json& j, Eigen::Index p) {
  Standardization s;
  s.x_mean = vector_from_json(j.at("x_mean"), p, "x_mean");
  s.x_sd = vector_from_json(j.at("x_sd"), p, "x_sd");
  s.y_mean = j.at("y_mean").get<double>();
  s.y_sd = j.at("y_sd").get<double>();
  return s;
}

inline std::vector<std::string> draws_table_header(Eigen::Index p, Eigen::Index k) {
  std::vector<std::string> h{"draw"};
  for (Eigen::Index i = 0; i <= p; ++i)
    for (Eigen::Index l = 0; l < k; ++l) h.push_back("lambda_" + std::to_string(i) + "_" + std::to_string(l + 1));
  for (Eigen::Index i = 0; i <= p; ++i) h.push_back("sigma2_" + std::to_string(i));
  for (Eigen::Index j = 0; j < p; ++j) h.push_back("beta_" + std::to_string(j + 1));
  h.push_back("resid_var");
  return h;
}

inline void write_draws_table(std::ostream& out, const PosteriorDraws& draws) {
  const auto header = draws_table_header(draws.p, draws.k);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  using detail::format_double;
  for (std::size_t t = 0; t < draws.size(); ++t) {
    const Draw& d = draws.draws[t];
    out << t;
    for (Eigen::Index i = 0; i < d.model.dim(); ++i)
      for (Eigen::Index l = 0; l < d.model.k(); ++l) out << ',' << format_double(d.model.lambda(i, l));
    for (Eigen::Index i = 0; i < d.model.dim(); ++i) out << ',' << format_double(d.model.sigma_diag(i));
    for (Eigen::Index j = 0; j < d.regression.beta.size(); ++j) out << ',' << format_double(d.regression.beta(j));
    out << ',' << format_double(d.regression.sigma2) << '\n';
  }
}

inline std::vector<Draw> read_draws_table(std::istream& in, Eigen::Index p, Eigen::Index k, bool fixed) {
  const auto header = draws_table_header(p, k);
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("draws table is empty");
  const auto fields = detail::split_fields(line);
  if (fields.size() != header.size()) throw InvalidInput("draws table header does not match p and k");
  for (std::size_t c = 0; c < header.size(); ++c)
    if (detail::unquote(fields[c]) != header[c])
      throw InvalidInput("draws table column " + std::to_string(c) + " should be '" + header[c] + "'");
  std::vector<Draw> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != header.size()) throw ParseError(row, "", "wrong field count");
    std::vector<double> v(f.size());
    for (std::size_t c = 0; c < f.size(); ++c) {
      const auto parsed = detail::parse_decimal(detail::trim(f[c]));
      if (!parsed) throw ParseError(row, header[c], std::string(f[c]));
      v[c] = *parsed;
    }
    Draw d;
    std::size_t pos = 1;
    d.model.lambda.resize(p + 1, k);
    for (Eigen::Index i = 0; i <= p; ++i)
      for (Eigen::Index l = 0; l < k; ++l) d.model.lambda(i, l) = v[pos++];
    d.model.sigma_diag.resize(p + 1);
    for (Eigen::Index i = 0; i <= p; ++i) d.model.sigma_diag(i) = v[pos++];
    d.model.y_variance_fixed = fixed;
    d.regression.beta.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) d.regression.beta(j) = v[pos++];
    d.regression.sigma2 = v[pos];
    out.push_back(std::move(d));
  }
  return out;
}

inline Json manifest_json(const PosteriorDraws& draws, const FitRecord& rec, const std::string& table_file) {
  Json j;
  j["format"] = kManifestFormat;
  j["version"] = kManifestVersion;
  j["p"] = draws.p;
  j["k"] = draws.k;
  j["retained"] = draws.size();
  j["config"] = config_to_json(draws.config, draws.p);
  j["draws_file"] = table_file;
  j["predictor_names"] = rec.predictor_names;
  j["response_name"] = rec.response_name;
  j["standardization"] = rec.standardization ? standardization_to_json(*rec.standardization) : Json(nullptr);
  if (rec.cv)
    j["cv"] = {{"sigma_hat", rec.cv->sigma_hat}, {"n_folds", rec.cv->n_folds}, {"curve_file", rec.cv->curve_file}};
  if (!rec.data_source.empty()) j["data_source"] = rec.data_source;
  j["beta_mean"] = to_json_vector(draws.mean_beta());
  j["sigma_y2_mean"] = draws.mean_sigma_y2();
  return j;
}

/// Writes MANIFEST (JSON) and the draws table alongside it; returns the table path.
inline std::filesystem::path save_draws(const std::filesystem::path& manifest_path, const PosteriorDraws& draws,
                                        const FitRecord& rec) {
  std::filesystem::path table = manifest_path;
  table.replace_extension(".draws.csv");
  std::ofstream tout(table);
  if (!tout) throw IoError("cannot write " + table.string());
  write_draws_table(tout, draws);
  std::ofstream mout(manifest_path);
  if (!mout) throw IoError("cannot write " + manifest_path.string());
  mout << manifest_json(draws, rec, table.filename().string()).dump(2) << '\n';
  if (!tout || !mout) throw IoError("write failed for " + manifest_path.string());
  return table;
}

struct LoadedFit {
  PosteriorDraws draws;
  FitRecord record;
};

inline LoadedFit load_draws(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  LoadedFit out;
  try {
    const Json j = Json::parse(in);
    if (j.value("format", "") != kManifestFormat) throw InvalidInput("not a draws manifest: " + manifest_path.string());
    const auto p = j.at("p").get<Eigen::Index>();
    const auto k = j.at("k").get<Eigen::Index>();
    out.draws.p = p;
    out.draws.k = static_cast<int>(k);
    out.draws.config = config_from_json(j.at("config"));
    out.record.predictor_names = j.at("predictor_names").get<std::vector<std::string>>();
    out.record.response_name = j.at("response_name").get<std::string>();
    if (!j.at("standardization").is_null())
      out.record.standardization = standardization_from_json(j["standardization"], p);
    if (j.contains("cv")) {
      CvRecord cv;
      cv.sigma_hat = j["cv"].at("sigma_hat").get<double>();
      cv.n_folds = j["cv"].at("n_folds").get<int>();
      cv.curve_file = j["cv"].at("curve_file").get<std::string>();
      out.record.cv = cv;
    }
    out.record.data_source = j.value("data_source", "");
    const auto table = manifest_path.parent_path() / j.at("draws_file").get<std::string>();
    std::ifstream tin(table);
    if (!tin) throw IoError("cannot open " + table.string());
    out.draws.draws = read_draws_table(tin, p, k, out.draws.config.mode.fixed());
    if (out.draws.size() != j.at("retained").get<std::size_t>())
      throw InvalidInput("draws table has " + std::to_string(out.draws.size()) + " rows, manifest says " +
                         std::to_string(j.at("retained").get<std::size_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("manifest " + manifest_path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace tebfar

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tebfar/baselines.hpp"
#include "tebfar/cv.hpp"
#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/gibbs.hpp"
#include "tebfar/parallel.hpp"
#include "tebfar/rng.hpp"
#include "tebfar/simgen.hpp"
#include "tebfar/teb_select.hpp"

// Method x training-size x seed simulation study on the scenario generators.
namespace tebfar::bench {

enum class Method { TebfarCv, Jbfm, LassoCv, RidgeCv, Ols };

inline Method parse_method(const std::string& s) {
  if (s == "tebfar-cv") return Method::TebfarCv;
  if (s == "jbfm") return Method::Jbfm;
  if (s == "lasso-cv") return Method::LassoCv;
  if (s == "ridge-cv") return Method::RidgeCv;
  if (s == "ols") return Method::Ols;
  throw ConfigError("unknown method '" + s + "' (expected tebfar-cv, jbfm, lasso-cv, ridge-cv or ols)");
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::TebfarCv: return "tebfar-cv";
    case Method::Jbfm: return "jbfm";
    case Method::LassoCv: return "lasso-cv";
    case Method::RidgeCv: return "ridge-cv";
    case Method::Ols: return "ols";
  }
  return "?";
}

inline std::vector<Method> all_methods() {
  return {Method::TebfarCv, Method::Jbfm, Method::LassoCv, Method::RidgeCv, Method::Ols};
}

struct BenchConfig {
  sim::Scenario scenario = sim::Scenario::Three;
  std::vector<Eigen::Index> ntrains;
  Eigen::Index ntest = 1000;
  std::vector<std::uint64_t> seeds;
  std::vector<Method> methods = all_methods();
  SigmaGrid grid = SigmaGrid::standard();
  int n_folds = 10;
  SamplerConfig cell_config = default_cv_cell_config();
  SamplerConfig final_config;  // mode and seed are set per run
  int jobs = 1;

  void validate() const {
    if (ntrains.empty()) throw ConfigError("bench needs at least one training size");
    if (seeds.empty()) throw ConfigError("bench needs at least one seed");
    if (methods.empty()) throw ConfigError("bench needs at least one method");
    if (ntest < 1) throw ConfigError("ntest must be at least 1");
    for (auto n : ntrains)
      if (n < 2) throw ConfigError("training sizes must be at least 2");
  }
};

struct MethodFit {
  Eigen::VectorXd y_hat;  // original response scale
  std::optional<double> tuned;  // selected sigma_y2 or penalty
};

/// Fits one method on `train` (raw scale) and predicts `test`. Standardization
/// is estimated on the training rows only.
inline MethodFit fit_and_predict(Method method, const Dataset& train, const Dataset& test, const BenchConfig& cfg,
                                 std::uint64_t seed) {
  const auto [train_std, params] = standardize(train);
  const Eigen::MatrixXd x_test = apply_standardization_x(params, test.x);
  const std::uint64_t mkey = static_cast<std::uint64_t>(method);
  CvPlan plan;
  plan.n_folds = cfg.n_folds;
  plan.seed = derive_seed(seed, {mkey, 0});
  MethodFit out;
  Eigen::VectorXd beta;
  switch (method) {
    case Method::TebfarCv: {
      SamplerConfig cell = cfg.cell_config;
      cell.seed = derive_seed(seed, {mkey, 1});
      const SigmaSelection sel = cv_select_sigma(train_std, cfg.grid, plan, cell, 1);
      SamplerConfig fin = cfg.final_config;
      fin.mode = SamplerMode::tebfar(sel.sigma_hat);
      fin.seed = derive_seed(seed, {mkey, 2});
      beta = run_chain(train_std, fin).mean_beta();
      out.tuned = sel.sigma_hat;
      break;
    }
    case Method::Jbfm: {
      SamplerConfig fin = cfg.final_config;
      fin.mode = SamplerMode::jbfm();
      fin.seed = derive_seed(seed, {mkey, 2});
      beta = run_chain(train_std, fin).mean_beta();
      break;
    }
    case Method::LassoCv: {
      const auto grid = baselines::lasso_default_grid(train_std.x, train_std.y);
      const auto t = baselines::cv_tune_lasso(train_std, grid, plan, 1);
      std::vector<double> upper;
      for (double v : grid)
        if (v >= t.best_penalty) upper.push_back(v);
      beta = baselines::lasso_path(train_std.x, train_std.y, upper).front();
      out.tuned = t.best_penalty;
      break;
    }
    case Method::RidgeCv: {
      const auto t = baselines::cv_tune(baselines::ridge_fit, train_std, baselines::ridge_default_grid(), plan, 1);
      beta = baselines::ridge_fit(train_std.x, train_std.y, t.best_penalty);
      out.tuned = t.best_penalty;
      break;
    }
    case Method::Ols:
      beta = baselines::ols_fit(train_std.x, train_std.y);
      break;
  }
  out.y_hat = unstandardize_predictions(params, x_test * beta);
  return out;
}

struct BenchRow {
  ResultRow result;
  std::optional<double> tuned;
};

struct BenchResult {
  std::vector<BenchRow> rows;  // canonical (method, ntrain, seed) order

  std::vector<ResultRow> results() const {
    std::vector<ResultRow> r;
    for (const auto& b : rows) r.push_back(b.result);
    return r;
  }
};

using Progress = std::function<void(const BenchRow&)>;

/// Runs every (method, ntrain, seed) cell, up to cfg.jobs at a time. Rows come
/// back in the order methods x ntrains x seeds as given in cfg.
inline BenchResult run_bench(const BenchConfig& cfg, const Progress& progress = {}) {
  cfg.validate();
  cfg.cell_config.validate();
  cfg.final_config.validate();
  const std::size_t nm = cfg.methods.size(), nn = cfg.ntrains.size(), ns = cfg.seeds.size();
  BenchResult out;
  out.rows.resize(nm * nn * ns);
  std::mutex progress_mutex;
  parallel_for(out.rows.size(), cfg.jobs, [&](std::size_t cell) {
    const Method method = cfg.methods[cell / (nn * ns)];
    const Eigen::Index ntrain = cfg.ntrains[(cell / ns) % nn];
    const std::uint64_t seed = cfg.seeds[cell % ns];
    sim::ScenarioSpec spec;
    spec.scenario = cfg.scenario;
    spec.n_train = ntrain;
    spec.n_test = cfg.ntest;
    spec.seed = seed;
    const sim::SimulatedData data = sim::simulate(spec);
    BenchRow row;
    try {
      const MethodFit fit = fit_and_predict(method, data.train, data.test, cfg, seed);
      row.result = {method_name(method), ntrain, seed, mse(fit.y_hat, data.test.y)};
      row.tuned = fit.tuned;
    } catch (const Error& e) {
      throw NumericError("bench cell (" + method_name(method) + ", ntrain " + std::to_string(ntrain) + ", seed " +
                         std::to_string(seed) + ") failed: " + e.what());
    }
    out.rows[cell] = row;
    if (progress) {
      const std::lock_guard lock(progress_mutex);
      progress(row);
    }
  });
  return out;
}

struct PivotTable {
  std::vector<Eigen::Index> ntrains;
  std::vector<std::string> methods;
  Eigen::MatrixXd mean_mse;  // ntrains x methods
};

/// Mean MSE per (ntrain, method), in first-appearance order.
inline PivotTable pivot(const std::vector<ResultRow>& rows) {
  PivotTable t;
  for (const auto& r : rows) {
    if (std::find(t.ntrains.begin(), t.ntrains.end(), r.ntrain) == t.ntrains.end()) t.ntrains.push_back(r.ntrain);
    if (std::find(t.methods.begin(), t.methods.end(), r.method) == t.methods.end()) t.methods.push_back(r.method);
  }
  const auto ni = static_cast<Eigen::Index>(t.ntrains.size());
  const auto mi = static_cast<Eigen::Index>(t.methods.size());
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(ni, mi);
  Eigen::MatrixXd count = Eigen::MatrixXd::Zero(ni, mi);
  for (const auto& r : rows) {
    const auto i = std::find(t.ntrains.begin(), t.ntrains.end(), r.ntrain) - t.ntrains.begin();
    const auto j = std::find(t.methods.begin(), t.methods.end(), r.method) - t.methods.begin();
    sum(i, j) += r.mse;
    count(i, j) += 1.0;
  }
  t.mean_mse = sum.cwiseQuotient(count);
  return t;
}

inline void write_pivot(std::ostream& out, const PivotTable& t) {
  out << "ntrain";
  for (const auto& m : t.methods) out << ',' << m;
  out << '\n';
  for (std::size_t i = 0; i < t.ntrains.size(); ++i) {
    out << t.ntrains[i];
    for (Eigen::Index j = 0; j < t.mean_mse.cols(); ++j)
      out << ',' << detail::format_double(t.mean_mse(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

}  // namespace tebfar::bench

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "tebfar/cv.hpp"
#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/gibbs.hpp"
#include "tebfar/parallel.hpp"

namespace tebfar {

/// Candidate values for the fixed response variance: strictly increasing, in (0, 1].
class SigmaGrid {
 public:
  explicit SigmaGrid(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ConfigError("sigma grid is empty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] > 0.0 && values_[i] <= 1.0))
        throw ConfigError("sigma grid values must lie in (0, 1]");
      if (i > 0 && !(values_[i] > values_[i - 1])) throw ConfigError("sigma grid must be strictly increasing");
    }
  }

  /// n evenly spaced values from lo to hi inclusive.
  static SigmaGrid linspace(double lo, double hi, int n) {
    if (n < 1) throw ConfigError("grid needs at least one value");
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    if (n > 1) v.back() = hi;
    return SigmaGrid(std::move(v));
  }

  /// 0.01, 0.02, ..., 1.00
  static SigmaGrid standard() { return linspace(0.01, 1.0, 100); }

  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

/// X_new * mean(beta) over retained draws.
inline Eigen::VectorXd predict(const PosteriorDraws& draws, const Eigen::MatrixXd& x_new) {
  if (draws.empty()) throw InvalidInput("predict: no posterior draws");
  if (x_new.cols() != draws.p)
    throw DimensionMismatch("predict: expected " + std::to_string(draws.p) + " predictor columns, got " +
                            std::to_string(x_new.cols()));
  return x_new * draws.mean_beta();
}

/// Shorter chains used inside cross-validation cells.
inline SamplerConfig default_cv_cell_config() {
  SamplerConfig c;
  c.iterations = 2000;
  c.burn_in = 1000;
  c.thin = 5;
  return c;
}

struct SigmaSelection {
  double sigma_hat = 0.0;
  std::vector<double> grid;
  std::vector<double> curve;  // mean held-out MSE per grid value
};

/// Picks the fixed response variance by K-fold cross-validated MSE.
///
/// Each (grid value, fold) cell runs an independent fixed-variance chain whose
/// seed depends on cell_config.seed, the grid value and the held-out row set,
/// so a cell's score does not depend on the rest of the grid or on fold labels.
inline SigmaSelection cv_select_sigma(const Dataset& data, const SigmaGrid& grid, const CvPlan& plan,
                                      const SamplerConfig& cell_config, int jobs = 1) {
  const auto folds = make_folds(plan.folds_for(data.n()), plan.n_folds);
  std::vector<FoldData> fold_sets;
  fold_sets.reserve(folds.size());
  for (const auto& f : folds) fold_sets.push_back(fold_data(data, f));

  const std::size_t g = grid.size();
  const std::size_t nf = folds.size();
  std::vector<double> cell_mse(g * nf, 0.0);
  parallel_for(g * nf, jobs, [&](std::size_t cell) {
    const std::size_t gi = cell / nf;
    const std::size_t fi = cell % nf;
    const double v = grid.values()[gi];
    SamplerConfig cfg = cell_config;
    cfg.mode = SamplerMode::tebfar(v);
    cfg.seed = derive_seed(cell_config.seed, {seed_key(v), folds[fi].key});
    try {
      const auto& fd = fold_sets[fi];
      const PosteriorDraws draws = run_chain(fd.train, cfg);
      cell_mse[cell] = mse(predict(draws, fd.test.x), fd.test.y);
    } catch (const Error& e) {
      throw NumericError("cross-validation cell (sigma_y2 = " + std::to_string(v) + ", fold " +
                         std::to_string(fi) + ") failed: " + e.what());
    }
  });

  SigmaSelection out;
  out.grid = grid.values();
  out.curve.resize(g);
  for (std::size_t gi = 0; gi < g; ++gi) {
    double sum = 0.0;
    for (std::size_t fi = 0; fi < nf; ++fi) sum += cell_mse[gi * nf + fi];
    out.curve[gi] = sum / static_cast<double>(nf);
  }
  out.sigma_hat = out.grid[argmin_prefer_last(out.curve)];
  return out;
}

inline void write_cv_curve(std::ostream& out, const SigmaSelection& sel) {
  out << "sigma_y2,mean_cv_mse\n";
  for (std::size_t i = 0; i < sel.grid.size(); ++i)
    out << detail::format_double(sel.grid[i]) << ',' << detail::format_double(sel.curve[i]) << '\n';
}

}  // namespace tebfar

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/rng.hpp"

namespace tebfar {

/// K-fold plan. Fold labels come from a seeded permutation (row at permuted
/// position r goes to fold r mod K) unless an explicit assignment is given.
struct CvPlan {
  int n_folds = 10;
  std::uint64_t seed = 0;
  std::optional<std::vector<int>> assignment;

  std::vector<int> folds_for(Eigen::Index n) const {
    if (n_folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (n < n_folds) throw InvalidInput("fewer rows than folds");
    if (assignment) {
      if (static_cast<Eigen::Index>(assignment->size()) != n)
        throw DimensionMismatch("fold assignment length differs from row count");
      for (int f : *assignment)
        if (f < 0 || f >= n_folds) throw InvalidInput("fold label out of range");
      return *assignment;
    }
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> folds(static_cast<std::size_t>(n));
    for (std::size_t r = 0; r < perm.size(); ++r)
      folds[static_cast<std::size_t>(perm[r])] = static_cast<int>(r % static_cast<std::size_t>(n_folds));
    return folds;
  }
};

/// One held-out fold: row indices, ordered by position in the data.
struct Fold {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
  // Label-free identity of the held-out set; used to derive seeds and the
  // reduction order so results do not depend on how folds are numbered.
  std::uint64_t key = 0;
};

/// Folds in canonical order (by smallest held-out row), skipping empty labels.
inline std::vector<Fold> make_folds(const std::vector<int>& labels, int n_folds) {
  std::vector<Fold> folds(static_cast<std::size_t>(n_folds));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int f = 0; f < n_folds; ++f) {
      auto& dst = labels[i] == f ? folds[static_cast<std::size_t>(f)].test : folds[static_cast<std::size_t>(f)].train;
      dst.push_back(static_cast<Eigen::Index>(i));
    }
  }
  std::erase_if(folds, [](const Fold& f) { return f.test.empty(); });
  for (auto& f : folds) {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (Eigen::Index i : f.test) h = splitmix64(h ^ static_cast<std::uint64_t>(i));
    f.key = h;
  }
  std::sort(folds.begin(), folds.end(), [](const Fold& a, const Fold& b) { return a.test.front() < b.test.front(); });
  return folds;
}

inline double mse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& actual) {
  if (predicted.size() != actual.size()) throw DimensionMismatch("mse: lengths differ");
  if (predicted.size() == 0) throw InvalidInput("mse: empty input");
  return (predicted - actual).squaredNorm() / static_cast<double>(predicted.size());
}

/// Fold training complement standardized on itself, held-out rows transformed
/// with the same parameters.
struct FoldData {
  Dataset train;
  Dataset test;
};

inline FoldData fold_data(const Dataset& data, const Fold& fold) {
  auto [train, params] = standardize(data.rows(fold.train));
  return {std::move(train), apply_standardization(params, data.rows(fold.test))};
}

/// Index of the smallest curve value; ties go to the later (larger) grid value.
inline std::size_t argmin_prefer_last(const std::vector<double>& curve) {
  if (curve.empty()) throw InvalidInput("empty curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i] <= curve[best]) best = i;
  return best;
}

}  // namespace tebfar

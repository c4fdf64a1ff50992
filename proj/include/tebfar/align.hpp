#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "tebfar/dataio.hpp"
#include "tebfar/errors.hpp"
#include "tebfar/gibbs.hpp"

// Rotation, permutation and sign post-processing for loadings matrices:
// varimax rotation followed by greedy signed column matching.
namespace tebfar::align {

/// Raw varimax criterion: sum over columns of the variance of squared loadings.
inline double varimax_criterion(const Eigen::MatrixXd& lambda) {
  const double p = static_cast<double>(lambda.rows());
  double total = 0.0;
  for (Eigen::Index l = 0; l < lambda.cols(); ++l) {
    const Eigen::ArrayXd sq = lambda.col(l).array().square();
    total += sq.square().sum() / p - std::pow(sq.sum() / p, 2);
  }
  return total;
}

struct VarimaxResult {
  Eigen::MatrixXd rotated;
  Eigen::MatrixXd rotation;  // rotated = lambda * rotation
  int sweeps = 0;
  std::vector<double> criterion_trace;
};

/// Pairwise (Jacobi) varimax. Each planar rotation uses the optimal angle for
/// its column pair, so the criterion never decreases between sweeps.
inline VarimaxResult varimax(const Eigen::MatrixXd& lambda, double tol = 1e-8, int max_iter = 1000) {
  const Eigen::Index k = lambda.cols();
  const double p = static_cast<double>(lambda.rows());
  VarimaxResult out;
  out.rotated = lambda;
  out.rotation = Eigen::MatrixXd::Identity(k, k);
  out.criterion_trace.push_back(varimax_criterion(lambda));
  if (k < 2) return out;
  for (out.sweeps = 1; out.sweeps <= max_iter; ++out.sweeps) {
    double max_angle = 0.0;
    for (Eigen::Index a = 0; a < k - 1; ++a)
      for (Eigen::Index b = a + 1; b < k; ++b) {
        const Eigen::ArrayXd x = out.rotated.col(a).array();
        const Eigen::ArrayXd y = out.rotated.col(b).array();
        const Eigen::ArrayXd u = x.square() - y.square();
        const Eigen::ArrayXd v = 2.0 * x * y;
        const double sa = u.sum();
        const double sb = v.sum();
        const double num = 2.0 * (u * v).sum() - 2.0 * sa * sb / p;
        const double den = (u.square() - v.square()).sum() - (sa * sa - sb * sb) / p;
        if (std::abs(num) < 1e-300 && std::abs(den) < 1e-300) continue;
        const double phi = 0.25 * std::atan2(num, den);
        if (std::abs(phi) < 1e-15) continue;
        max_angle = std::max(max_angle, std::abs(phi));
        const double c = std::cos(phi);
        const double s = std::sin(phi);
        const Eigen::MatrixXd ra = out.rotated.col(a);
        out.rotated.col(a) = c * ra + s * out.rotated.col(b);
        out.rotated.col(b) = -s * ra + c * out.rotated.col(b);
        const Eigen::MatrixXd ta = out.rotation.col(a);
        out.rotation.col(a) = c * ta + s * out.rotation.col(b);
        out.rotation.col(b) = -s * ta + c * out.rotation.col(b);
      }
    out.criterion_trace.push_back(varimax_criterion(out.rotated));
    if (max_angle < tol) break;
  }
  out.sweeps = std::min(out.sweeps, max_iter);
  return out;
}

/// Uncentered correlation (cosine) of two columns; 0 if either is zero.
inline double column_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

struct Alignment {
  std::vector<Eigen::Index> permutation;  // aligned.col(i) = signs[i] * target.col(permutation[i])
  std::vector<int> signs;
  Eigen::MatrixXd aligned;
};

/// Greedy matching: repeatedly pair the unmatched reference/target columns with
/// the largest |similarity|, flipping the target column's sign to agree.
inline Alignment align_columns(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& target) {
  if (reference.rows() != target.rows() || reference.cols() != target.cols())
    throw DimensionMismatch("align_columns: reference and target shapes differ");
  const Eigen::Index k = reference.cols();
  Eigen::MatrixXd sim(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) sim(i, j) = column_similarity(reference.col(i), target.col(j));
  Alignment out;
  out.permutation.assign(static_cast<std::size_t>(k), -1);
  out.signs.assign(static_cast<std::size_t>(k), 1);
  std::vector<bool> ref_used(static_cast<std::size_t>(k), false), tgt_used(static_cast<std::size_t>(k), false);
  for (Eigen::Index step = 0; step < k; ++step) {
    double best = -1.0;
    Eigen::Index bi = -1, bj = -1;
    for (Eigen::Index i = 0; i < k; ++i) {
      if (ref_used[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (tgt_used[static_cast<std::size_t>(j)]) continue;
        if (std::abs(sim(i, j)) > best) {
          best = std::abs(sim(i, j));
          bi = i;
          bj = j;
        }
      }
    }
    ref_used[static_cast<std::size_t>(bi)] = true;
    tgt_used[static_cast<std::size_t>(bj)] = true;
    out.permutation[static_cast<std::size_t>(bi)] = bj;
    out.signs[static_cast<std::size_t>(bi)] = sim(bi, bj) < 0.0 ? -1 : 1;
  }
  out.aligned.resize(target.rows(), k);
  for (Eigen::Index i = 0; i < k; ++i)
    out.aligned.col(i) = out.signs[static_cast<std::size_t>(i)] * target.col(out.permutation[static_cast<std::size_t>(i)]);
  return out;
}

/// Linear-interpolation quantile (R type 7) of an unsorted sample.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidInput("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

struct AlignedSummary {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd lower;    // 2.5%
  Eigen::MatrixXd upper;    // 97.5%
  Eigen::MatrixXd display;  // mean, or 0 where [lower, upper] contains 0
};

/// Aligns each draw's loadings to `reference` (after varimax when requested)
/// and summarizes entrywise.
inline AlignedSummary summarize_aligned(const PosteriorDraws& draws, const Eigen::MatrixXd& reference,
                                        bool rotate = true) {
  if (draws.empty()) throw InvalidInput("summarize_aligned: no draws");
  const Eigen::Index rows = reference.rows();
  const Eigen::Index k = reference.cols();
  std::vector<Eigen::MatrixXd> aligned;
  aligned.reserve(draws.size());
  for (const auto& d : draws.draws) {
    const Eigen::MatrixXd lam = rotate ? varimax(d.model.lambda).rotated : d.model.lambda;
    aligned.push_back(align_columns(reference, lam).aligned);
  }
  AlignedSummary s;
  s.mean = Eigen::MatrixXd::Zero(rows, k);
  s.lower.resize(rows, k);
  s.upper.resize(rows, k);
  s.display.resize(rows, k);
  std::vector<double> buf(aligned.size());
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      for (std::size_t t = 0; t < aligned.size(); ++t) buf[t] = aligned[t](i, j);
      double sum = 0.0;
      for (double v : buf) sum += v;
      s.mean(i, j) = sum / static_cast<double>(buf.size());
      s.lower(i, j) = quantile(buf, 0.025);
      s.upper(i, j) = quantile(buf, 0.975);
      s.display(i, j) = (s.lower(i, j) <= 0.0 && s.upper(i, j) >= 0.0) ? 0.0 : s.mean(i, j);
    }
  return s;
}

inline void write_aligned_summary(std::ostream& out, const AlignedSummary& s,
                                  const std::vector<std::string>& row_names) {
  using detail::format_double;
  out << "row,variable,column,mean,lower,upper,display\n";
  for (Eigen::Index i = 0; i < s.mean.rows(); ++i)
    for (Eigen::Index j = 0; j < s.mean.cols(); ++j) {
      const std::string name =
          static_cast<std::size_t>(i) < row_names.size() ? row_names[static_cast<std::size_t>(i)] : std::to_string(i);
      out << i << ',' << name << ',' << (j + 1) << ',' << format_double(s.mean(i, j)) << ','
          << format_double(s.lower(i, j)) << ',' << format_double(s.upper(i, j)) << ','
          << format_double(s.display(i, j)) << '\n';
    }
}

}  // namespace tebfar::align

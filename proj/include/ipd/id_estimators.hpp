#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ipd/error.hpp"
#include "ipd/knn.hpp"
#include "ipd/matrix.hpp"

namespace ipd {

enum class IdEstimator { Mle, TwoNN };
enum class TwoNNVariant { LinearFit, ClosedForm };

constexpr std::string_view to_string(IdEstimator e) { return e == IdEstimator::Mle ? "mle" : "twonn"; }
constexpr std::string_view to_string(TwoNNVariant v) {
  return v == TwoNNVariant::LinearFit ? "linear_fit" : "closed_form";
}

struct IdEstimate {
  double value = 0.0;
  IdEstimator estimator = IdEstimator::Mle;
  std::size_t k = 0;              // MLE neighbor count (2 for TwoNN)
  double discard_fraction = 0.0;  // TwoNN only
  TwoNNVariant variant = TwoNNVariant::LinearFit;
  std::size_t n_used = 0;       // points passing the duplicate policy
  std::size_t n_excluded = 0;   // points with a zero neighbor distance
  std::size_t n_discarded = 0;  // TwoNN: largest ratios dropped before fitting
};

/// Maximum-likelihood intrinsic dimension, inverted-average form
///   d = [ 1/(n(k-1)) * sum_i sum_{j<k} log(T_k(x_i) / T_j(x_i)) ]^-1
/// from a precomputed table (table.k >= k). Points with T_1 = 0 are excluded.
inline IdEstimate mle_id(const NeighborTable& table, std::size_t k) {
  if (k < 2 || k > table.k) {
    throw Error(ErrorCode::KOutOfRange, "mle_id needs 2 <= k <= table.k, got k=" + std::to_string(k));
  }
  IdEstimate est;
  est.estimator = IdEstimator::Mle;
  est.k = k;
  // Per-point sums are added in sorted order so row order cannot change the result.
  std::vector<double> per_point;
  per_point.reserve(table.n);
  for (std::size_t i = 0; i < table.n; ++i) {
    const auto t = table.row(i);
    if (!(t[0] > 0.0)) {
      ++est.n_excluded;
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j + 1 < k; ++j) s += std::log(t[k - 1] / t[j]);
    per_point.push_back(s);
  }
  est.n_used = per_point.size();
  std::sort(per_point.begin(), per_point.end());
  double total = 0.0;
  for (double s : per_point) total += s;
  if (est.n_used == 0) {
    throw Error(ErrorCode::DegenerateCloud, "every point has a duplicate among its neighbors");
  }
  const double mean_log = total / (static_cast<double>(est.n_used) * static_cast<double>(k - 1));
  est.value = 1.0 / mean_log;
  if (!(mean_log > 0.0) || !std::isfinite(est.value)) {
    throw Error(ErrorCode::DegenerateCloud, "all neighbor distances equal; dimension undefined");
  }
  return est;
}

inline IdEstimate mle_id(const Matrix& points, std::span<const std::size_t> rows, std::size_t k = 20,
                         const KnnOptions& options = {}) {
  if (k < 2) throw Error(ErrorCode::KOutOfRange, "mle_id needs k >= 2");
  if (rows.size() <= k) {
    throw Error(ErrorCode::TooFewPoints, "mle_id with k=" + std::to_string(k) + " needs more than " +
                                             std::to_string(k) + " rows, got " +
                                             std::to_string(rows.size()));
  }
  return mle_id(knn_l2(points, rows, k, options), k);
}

inline IdEstimate mle_id(const Matrix& points, std::size_t k = 20, const KnnOptions& options = {}) {
  const auto rows = detail::all_rows(points);
  return mle_id(points, rows, k, options);
}

/// TwoNN from a table with at least two neighbors per point.
///
/// mu_i = T_2/T_1 over points with T_1 > 0, sorted ascending; the largest
/// ceil(discard_fraction * n) ratios are dropped. LinearFit regresses
/// -log(1 - i/n) on log mu_(i) through the origin (a point whose empirical CDF
/// reaches 1 has no finite ordinate and is dropped as well); ClosedForm
/// returns n_kept / sum log mu.
inline IdEstimate twonn_id(const NeighborTable& table, double discard_fraction = 0.1,
                           TwoNNVariant variant = TwoNNVariant::LinearFit) {
  if (!(discard_fraction >= 0.0 && discard_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "discard_fraction must be in [0, 1)");
  }
  if (table.k < 2) throw Error(ErrorCode::KOutOfRange, "twonn_id needs two neighbors per point");
  IdEstimate est;
  est.estimator = IdEstimator::TwoNN;
  est.k = 2;
  est.discard_fraction = discard_fraction;
  est.variant = variant;

  std::vector<double> mu;
  mu.reserve(table.n);
  for (std::size_t i = 0; i < table.n; ++i) {
    const double t1 = table.dist(i, 0), t2 = table.dist(i, 1);
    if (!(t1 > 0.0)) {
      ++est.n_excluded;
      continue;
    }
    const double ratio = t2 / t1;
    if (!std::isfinite(ratio)) {
      throw Error(ErrorCode::DegenerateCloud, "infinite neighbor ratio at point " + std::to_string(i));
    }
    mu.push_back(ratio);
  }
  est.n_used = mu.size();
  if (mu.size() < 3) {
    throw Error(ErrorCode::TooFewPoints,
                "twonn_id needs 3 usable points, got " + std::to_string(mu.size()));
  }
  std::sort(mu.begin(), mu.end());
  const std::size_t n = mu.size();
  const auto discard = static_cast<std::size_t>(std::ceil(discard_fraction * static_cast<double>(n)));
  if (discard >= n) throw Error(ErrorCode::TooFewPoints, "discard_fraction removes every point");
  std::size_t kept = n - discard;

  if (variant == TwoNNVariant::ClosedForm) {
    est.n_discarded = discard;
    double sum_log = 0.0;
    for (std::size_t i = 0; i < kept; ++i) sum_log += std::log(mu[i]);
    if (!(sum_log > 0.0)) throw Error(ErrorCode::DegenerateCloud, "all neighbor ratios equal 1");
    est.value = static_cast<double>(kept) / sum_log;
    return est;
  }

  if (kept == n) --kept;  // F(mu_(n)) = 1
  est.n_discarded = n - kept;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < kept; ++i) {
    const double x = std::log(mu[i]);
    const double y = -std::log1p(-static_cast<double>(i + 1) / static_cast<double>(n));
    sxy += x * y;
    sxx += x * x;
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::DegenerateCloud, "all neighbor ratios equal 1");
  est.value = sxy / sxx;
  if (!(est.value > 0.0) || !std::isfinite(est.value)) {
    throw Error(ErrorCode::DegenerateCloud, "non-positive TwoNN slope");
  }
  return est;
}

inline IdEstimate twonn_id(const Matrix& points, std::span<const std::size_t> rows,
                           double discard_fraction = 0.1,
                           TwoNNVariant variant = TwoNNVariant::LinearFit,
                           const KnnOptions& options = {}) {
  if (rows.size() < 3) {
    throw Error(ErrorCode::TooFewPoints, "twonn_id needs at least 3 rows");
  }
  return twonn_id(knn_l2(points, rows, 2, options), discard_fraction, variant);
}

inline IdEstimate twonn_id(const Matrix& points, double discard_fraction = 0.1,
                           TwoNNVariant variant = TwoNNVariant::LinearFit,
                           const KnnOptions& options = {}) {
  const auto rows = detail::all_rows(points);
  return twonn_id(points, rows, discard_fraction, variant, options);
}

}  // namespace ipd

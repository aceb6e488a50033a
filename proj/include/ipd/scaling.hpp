#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ipd/error.hpp"
#include "ipd/records.hpp"

namespace ipd {

enum class ScalingModel { AWithKF, BWithoutKF, Repr };

constexpr std::string_view to_string(ScalingModel m) {
  switch (m) {
    case ScalingModel::AWithKF: return "A_with_KF";
    case ScalingModel::BWithoutKF: return "B_without_KF";
    case ScalingModel::Repr: return "REPR";
  }
  return "unknown";
}

/// Least-squares fit of log-loss scaling laws whose only free parameter is an
/// additive offset; the slopes 1/d and the ln K_F term are measured inputs.
struct FitResult {
  ScalingModel model = ScalingModel::AWithKF;
  double offset = 0.0;
  std::vector<double> residuals;  // basis_i - offset
  double sse = 0.0;
  std::size_t n_records = 0;
};

struct CorrelationResult {
  double r = 0.0;
  std::size_t n = 0;
};

struct BoundReport {
  double lower_bound = 0.0;
  double margin = 0.0;
  double lipschitz = 0.0;
};

struct DimComparison {
  bool satisfied = false;
  double gap = 0.0;  // d_data - d_repr
};

struct TaskRanking {
  struct Ratio {
    std::string numerator;
    std::string denominator;
    double ratio;
    bool tie;
  };
  std::vector<std::pair<std::string, double>> order;  // hardest (largest k_f) first
  std::vector<Ratio> ratios;                          // every i < j in `order`
};

/// Offset-free part of each model's prediction, moved to the loss side:
///   A:    ln L + ln N / d_data - ln K_F
///   B:    ln L + ln N / d_data
///   REPR: ln L + ln N / d_repr
inline double scaling_basis(const ScalingRecord& r, ScalingModel model) {
  const double log_n = std::log(static_cast<double>(r.train_size));
  switch (model) {
    case ScalingModel::AWithKF: return std::log(r.loss) + log_n / r.d_data - std::log(r.k_f);
    case ScalingModel::BWithoutKF: return std::log(r.loss) + log_n / r.d_data;
    case ScalingModel::Repr:
      if (!r.d_repr) {
        throw Error(ErrorCode::MissingDRepr, "record '" + r.dataset_id + "' has no d_repr");
      }
      return std::log(r.loss) + log_n / *r.d_repr;
  }
  return 0.0;
}

/// The minimizer of sum (ln L_i - prediction_i)^2 over the offset is the mean basis.
inline FitResult fit_model(std::span<const ScalingRecord> records, ScalingModel model) {
  if (records.empty()) throw Error(ErrorCode::EmptyRecords, "no records to fit");
  std::vector<double> basis;
  basis.reserve(records.size());
  for (const auto& r : records) basis.push_back(scaling_basis(r, model));
  FitResult fit;
  fit.model = model;
  fit.n_records = records.size();
  fit.offset = std::accumulate(basis.begin(), basis.end(), 0.0) / static_cast<double>(basis.size());
  fit.residuals.reserve(basis.size());
  for (double b : basis) {
    const double res = b - fit.offset;
    fit.residuals.push_back(res);
    fit.sse += res * res;
  }
  return fit;
}

inline FitResult fit_model_a(std::span<const ScalingRecord> records) {
  return fit_model(records, ScalingModel::AWithKF);
}
inline FitResult fit_model_b(std::span<const ScalingRecord> records) {
  return fit_model(records, ScalingModel::BWithoutKF);
}
inline FitResult fit_model_repr(std::span<const ScalingRecord> records) {
  return fit_model(records, ScalingModel::Repr);
}

/// Natural log of the Gaussian likelihood ratio p(D|A)/p(D|B) at the fitted
/// offsets: (SSE_B - SSE_A) / 2. Positive favors the first fit.
inline double log_likelihood_ratio(const FitResult& fit_a, const FitResult& fit_b) {
  if (fit_a.n_records != fit_b.n_records) {
    throw Error(ErrorCode::MismatchedRecords, "fits cover " + std::to_string(fit_a.n_records) +
                                                  " and " + std::to_string(fit_b.n_records) +
                                                  " records");
  }
  return (fit_b.sse - fit_a.sse) / 2.0;
}

/// Sample Pearson correlation (two-pass, centered).
inline CorrelationResult pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "pearson_r needs two equal-length series of length >= 2");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw Error(ErrorCode::DegenerateVariance, "a series has zero variance");
  }
  const double r = sxy / std::sqrt(sxx * syy);
  return {std::clamp(r, -1.0, 1.0), xs.size()};
}

/// Margin-based lower bound on the robustness radius: margin / (sqrt(2) * K).
inline BoundReport robustness_lower_bound(double margin, double lipschitz) {
  if (!(lipschitz > 0.0) || !std::isfinite(lipschitz)) {
    throw Error(ErrorCode::InvalidArgument, "lipschitz constant must be positive and finite");
  }
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw Error(ErrorCode::InvalidArgument, "margin must be nonnegative and finite");
  }
  return {margin / (std::numbers::sqrt2 * lipschitz), margin, lipschitz};
}

/// Empirical check that the representation dimension does not exceed the data
/// dimension. Inclusive at equality.
inline DimComparison compare_dims(double d_data, double d_repr) {
  if (!(d_data > 0.0) || !(d_repr > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "dimensions must be positive");
  }
  return {d_repr <= d_data, d_data - d_repr};
}

/// Orders tasks by descending label sharpness (predicted hardest first) and
/// reports every pairwise sharpness ratio, which approximates the loss ratio.
inline TaskRanking rank_tasks(std::vector<std::pair<std::string, double>> tasks) {
  if (tasks.empty()) throw Error(ErrorCode::InvalidArgument, "no tasks to rank");
  for (const auto& [name, k] : tasks) {
    if (!(k > 0.0) || !std::isfinite(k)) {
      throw Error(ErrorCode::NonPositiveField, "task '" + name + "' has non-positive k_f");
    }
  }
  std::stable_sort(tasks.begin(), tasks.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  TaskRanking out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (std::size_t j = i + 1; j < tasks.size(); ++j) {
      out.ratios.push_back({tasks[i].first, tasks[j].first, tasks[i].second / tasks[j].second,
                            tasks[i].second == tasks[j].second});
    }
  }
  out.order = std::move(tasks);
  return out;
}

/// Groups records by `key(record)` preserving first-appearance order.
inline std::vector<std::pair<std::string, std::vector<ScalingRecord>>> group_records(
    std::span<const ScalingRecord> records,
    const std::function<std::string(const ScalingRecord&)>& key) {
  std::vector<std::pair<std::string, std::vector<ScalingRecord>>> groups;
  for (const auto& r : records) {
    const std::string k = key(r);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == k; });
    if (it == groups.end()) {
      groups.emplace_back(k, std::vector<ScalingRecord>{r});
    } else {
      it->second.push_back(r);
    }
  }
  return groups;
}

}  // namespace ipd

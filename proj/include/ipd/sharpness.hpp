#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipd/error.hpp"
#include "ipd/knn.hpp"
#include "ipd/matrix.hpp"
#include "ipd/rng.hpp"

namespace ipd {

/// Empirical label sharpness: the largest label-difference-to-distance ratio
/// over all pairs of a class-balanced random sample.
struct SharpnessEstimate {
  double value = 0.0;  // mean of the finite per-run values; +inf if every run was infinite
  std::size_t m_used = 0;
  std::size_t runs = 0;
  std::vector<double> per_run_values;
  std::vector<std::pair<Label, Label>> run_pairs;  // class pair compared in each run
  std::uint64_t seed = 0;
  std::pair<std::size_t, std::size_t> argmax_pair{0, 0};  // dataset rows, last run
  std::size_t infinite_runs = 0;

  bool infinite() const noexcept { return std::isinf(value); }
};

namespace detail {

struct ClassRows {
  Label label;
  std::vector<std::size_t> rows;
};

inline std::vector<ClassRows> group_by_label(std::span<const Label> labels) {
  std::map<Label, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  std::vector<ClassRows> out;
  out.reserve(groups.size());
  for (auto& [label, rows] : groups) out.push_back({label, std::move(rows)});
  return out;
}

/// Draws min(per_class, smallest class) rows from each class in class order.
/// Returned rows are sorted ascending.
inline std::vector<std::size_t> balanced_sample(std::span<const ClassRows* const> classes,
                                                std::size_t per_class, Rng& rng) {
  std::size_t take = per_class;
  for (const ClassRows* c : classes) take = std::min(take, c->rows.size());
  std::vector<std::size_t> sample;
  sample.reserve(take * classes.size());
  for (const ClassRows* c : classes) {
    auto drawn = rng.sample_without_replacement(c->rows, take);
    sample.insert(sample.end(), drawn.begin(), drawn.end());
  }
  std::sort(sample.begin(), sample.end());
  return sample;
}

struct PairMax {
  double value;
  std::pair<std::size_t, std::size_t> pair;
};

/// max over sampled pairs of |y_j - y_k| / ||x_j - x_k|| where `code` maps a
/// row to its numeric label (0/1 for binary, class position for the indicator
/// form, in which case the numerator is clamped to 1). Same-label pairs give 0.
inline PairMax max_ratio(const Matrix& points, std::span<const std::size_t> sample,
                         const std::map<Label, double>& code, std::span<const Label> labels,
                         bool indicator, const KnnOptions& options) {
  const auto dist = pairwise_l2(points, sample, options);
  const std::size_t m = sample.size();
  std::vector<double> y(m);
  for (std::size_t i = 0; i < m; ++i) y[i] = code.at(labels[sample[i]]);
  PairMax best{-1.0, {sample[0], sample[1]}};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      double num = std::abs(y[i] - y[j]);
      if (indicator && num > 0.0) num = 1.0;
      const double d = dist[condensed_index(i, j, m)];
      double ratio = 0.0;
      if (num > 0.0) ratio = d > 0.0 ? num / d : std::numeric_limits<double>::infinity();
      if (ratio > best.value) best = {ratio, {sample[i], sample[j]}};
    }
  }
  return best;
}

inline void require_classes(const std::vector<ClassRows>& groups) {
  if (groups.size() < 2) {
    throw Error(ErrorCode::NotBinary, "label sharpness needs at least two classes, got " +
                                          std::to_string(groups.size()));
  }
}

inline std::size_t per_class_or_throw(std::size_t m, std::size_t classes) {
  const std::size_t per = m / classes;
  if (per == 0) {
    throw Error(ErrorCode::InvalidArgument, "m=" + std::to_string(m) + " is too small for " +
                                                std::to_string(classes) + " classes");
  }
  return per;
}

/// One binary run over classes a and b, relabeled {0, 1}.
inline PairMax binary_run(const LabeledDataset& data, const ClassRows& a, const ClassRows& b,
                          std::size_t m, Rng& rng, const KnnOptions& options,
                          std::size_t* m_used) {
  const ClassRows* pair[2] = {&a, &b};
  const auto sample = balanced_sample(pair, per_class_or_throw(m, 2), rng);
  *m_used = sample.size();
  const std::map<Label, double> code{{a.label, 0.0}, {b.label, 1.0}};
  return max_ratio(data.points, sample, code, data.labels, false, options);
}

inline void finish(SharpnessEstimate& est) {
  double sum = 0.0;
  std::size_t finite = 0;
  for (double v : est.per_run_values) {
    if (std::isinf(v)) {
      ++est.infinite_runs;
    } else {
      sum += v;
      ++finite;
    }
  }
  est.runs = est.per_run_values.size();
  est.value = finite == 0 ? std::numeric_limits<double>::infinity()
                          : sum / static_cast<double>(finite);
}

}  // namespace detail

/// Binary label sharpness. The two classes are coded 0 (smaller label) and 1.
/// A differing-label pair at distance zero yields +inf with argmax_pair set.
inline SharpnessEstimate label_sharpness(const LabeledDataset& data, std::size_t m = 1000,
                                         std::uint64_t seed = 0, const KnnOptions& options = {}) {
  const auto groups = detail::group_by_label(data.labels);
  if (groups.size() != 2) {
    throw Error(ErrorCode::NotBinary,
                "label_sharpness needs exactly two classes, got " + std::to_string(groups.size()));
  }
  Rng rng(seed);
  SharpnessEstimate est;
  est.seed = seed;
  const auto best = detail::binary_run(data, groups[0], groups[1], m, rng, options, &est.m_used);
  est.per_run_values = {best.value};
  est.run_pairs = {{groups[0].label, groups[1].label}};
  est.argmax_pair = best.pair;
  detail::finish(est);
  return est;
}

/// Multi-class variant: numerator is the indicator 1[y_j != y_k], sampling
/// floor(m / C) rows from each of the C classes (shrunk to the smallest class).
inline SharpnessEstimate multiclass_sharpness(const LabeledDataset& data, std::size_t m = 1000,
                                              std::uint64_t seed = 0,
                                              const KnnOptions& options = {}) {
  const auto groups = detail::group_by_label(data.labels);
  detail::require_classes(groups);
  std::vector<const detail::ClassRows*> classes;
  std::map<Label, double> code;
  for (const auto& g : groups) {
    code.emplace(g.label, static_cast<double>(classes.size()));
    classes.push_back(&g);
  }
  Rng rng(seed);
  const auto sample =
      detail::balanced_sample(classes, detail::per_class_or_throw(m, classes.size()), rng);
  const auto best = detail::max_ratio(data.points, sample, code, data.labels, true, options);
  SharpnessEstimate est;
  est.seed = seed;
  est.m_used = sample.size();
  est.per_run_values = {best.value};
  if (groups.size() == 2) est.run_pairs = {{groups[0].label, groups[1].label}};
  est.argmax_pair = best.pair;
  detail::finish(est);
  return est;
}

/// Averages binary sharpness over `runs` uniformly drawn unordered class
/// pairs. Run r samples with subseed derive_seed(seed, r); infinite runs are
/// counted in infinite_runs and left out of the mean.
inline SharpnessEstimate paired_sharpness(const LabeledDataset& data, std::size_t m = 1000,
                                          std::size_t runs = 25, std::uint64_t seed = 0,
                                          const KnnOptions& options = {}) {
  if (runs == 0) throw Error(ErrorCode::InvalidArgument, "runs must be positive");
  const auto groups = detail::group_by_label(data.labels);
  detail::require_classes(groups);
  Rng pair_rng(seed);
  SharpnessEstimate est;
  est.seed = seed;
  for (std::size_t r = 0; r < runs; ++r) {
    std::size_t a = pair_rng.below(groups.size());
    std::size_t b = pair_rng.below(groups.size() - 1);
    if (b >= a) ++b;
    if (b < a) std::swap(a, b);
    Rng rng(derive_seed(seed, r));
    std::size_t used = 0;
    const auto best = detail::binary_run(data, groups[a], groups[b], m, rng, options, &used);
    est.m_used = std::max(est.m_used, used);
    est.per_run_values.push_back(best.value);
    est.run_pairs.emplace_back(groups[a].label, groups[b].label);
    est.argmax_pair = best.pair;
  }
  detail::finish(est);
  return est;
}

}  // namespace ipd

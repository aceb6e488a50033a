#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "ipd/error.hpp"
#include "ipd/matrix.hpp"
#include "ipd/records.hpp"
#include "ipd/rng.hpp"

namespace ipd {

enum class ManifoldKind { Hypercube, Hypersphere, SineLift };
enum class Embedding { AxisAligned, RandomOrthogonal };

constexpr std::string_view to_string(ManifoldKind k) {
  switch (k) {
    case ManifoldKind::Hypercube: return "hypercube";
    case ManifoldKind::Hypersphere: return "hypersphere";
    case ManifoldKind::SineLift: return "sine_lift";
  }
  return "unknown";
}
constexpr std::string_view to_string(Embedding e) {
  return e == Embedding::AxisAligned ? "axis_aligned" : "random_orthogonal";
}

/// A point cloud with known intrinsic dimension.
///
/// hypercube:   u ~ U[0,1]^d
/// hypersphere: uniform on S^d in R^(d+1) (normalized Gaussian)
/// sine_lift:   u ~ U[0,1]^d mapped to (sin 2 pi u_i, cos 2 pi u_i) pairs, a flat d-torus in R^(2d)
/// The intrinsic coordinates are then placed in R^n either in the leading
/// axes or through a random matrix with orthonormal columns.
struct ManifoldSpec {
  std::size_t intrinsic_dim = 2;
  std::size_t ambient_dim = 2;
  ManifoldKind kind = ManifoldKind::Hypercube;
  Embedding embedding = Embedding::AxisAligned;
  std::size_t n_points = 1000;
  std::uint64_t seed = 0;

  /// Width of the coordinates before embedding.
  std::size_t base_dim() const noexcept {
    switch (kind) {
      case ManifoldKind::Hypercube: return intrinsic_dim;
      case ManifoldKind::Hypersphere: return intrinsic_dim + 1;
      case ManifoldKind::SineLift: return 2 * intrinsic_dim;
    }
    return intrinsic_dim;
  }

  void validate() const {
    if (intrinsic_dim < 1 || intrinsic_dim > ambient_dim) {
      throw Error(ErrorCode::InvalidSpec, "need 1 <= d <= n");
    }
    if (base_dim() > ambient_dim) {
      throw Error(ErrorCode::InvalidSpec, std::string(to_string(kind)) + " with d=" +
                                              std::to_string(intrinsic_dim) + " needs n >= " +
                                              std::to_string(base_dim()));
    }
    if (n_points < 1) throw Error(ErrorCode::InvalidSpec, "n_points must be positive");
  }
};

/// ambient x base matrix with orthonormal columns (Gram-Schmidt applied twice
/// to a Gaussian matrix), stored row-major.
inline Matrix random_orthonormal_columns(std::size_t ambient, std::size_t base, Rng& rng) {
  Matrix q(ambient, base);
  for (std::size_t c = 0; c < base; ++c) {
    for (std::size_t r = 0; r < ambient; ++r) q(r, c) = rng.normal();
  }
  for (std::size_t c = 0; c < base; ++c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t p = 0; p < c; ++p) {
        double dot = 0.0;
        for (std::size_t r = 0; r < ambient; ++r) dot += q(r, c) * q(r, p);
        for (std::size_t r = 0; r < ambient; ++r) q(r, c) -= dot * q(r, p);
      }
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < ambient; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < ambient; ++r) q(r, c) /= norm;
  }
  return q;
}

/// Intrinsic coordinates only (n_points x base_dim), before embedding.
inline Matrix sample_base_coordinates(const ManifoldSpec& spec, Rng& rng) {
  spec.validate();
  const std::size_t d = spec.intrinsic_dim;
  Matrix base(spec.n_points, spec.base_dim());
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    auto row = base.row(i);
    switch (spec.kind) {
      case ManifoldKind::Hypercube:
        for (auto& v : row) v = rng.uniform();
        break;
      case ManifoldKind::Hypersphere: {
        double norm = 0.0;
        do {
          norm = 0.0;
          for (auto& v : row) {
            v = rng.normal();
            norm += v * v;
          }
        } while (!(norm > 0.0));
        norm = std::sqrt(norm);
        for (auto& v : row) v /= norm;
        break;
      }
      case ManifoldKind::SineLift:
        for (std::size_t j = 0; j < d; ++j) {
          const double angle = 2.0 * std::numbers::pi * rng.uniform();
          row[2 * j] = std::sin(angle);
          row[2 * j + 1] = std::cos(angle);
        }
        break;
    }
  }
  return base;
}

/// Places base coordinates into the ambient space. Consumes rng draws only for
/// the random orthogonal embedding.
inline Matrix embed(const Matrix& base, std::size_t ambient, Embedding embedding, Rng& rng) {
  Matrix out(base.rows(), ambient);
  if (embedding == Embedding::AxisAligned) {
    for (std::size_t i = 0; i < base.rows(); ++i) {
      std::copy(base.row(i).begin(), base.row(i).end(), out.row(i).begin());
    }
    return out;
  }
  const Matrix q = random_orthonormal_columns(ambient, base.cols(), rng);
  for (std::size_t i = 0; i < base.rows(); ++i) {
    const auto u = base.row(i);
    auto x = out.row(i);
    for (std::size_t r = 0; r < ambient; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < u.size(); ++c) s += q(r, c) * u[c];
      x[r] = s;
    }
  }
  return out;
}

inline Matrix sample_manifold(const ManifoldSpec& spec) {
  Rng rng(spec.seed);
  const Matrix base = sample_base_coordinates(spec, rng);
  return embed(base, spec.ambient_dim, spec.embedding, rng);
}

struct HalfspaceLabels {
  LabeledDataset data;
  std::vector<std::size_t> kept_rows;  // source row of each output row
};

/// Labels x by 1[normal . x > threshold], dropping points within `margin` of
/// the threshold along the normal. Surviving cross-class pairs are at least
/// 2 * margin / ||normal|| apart.
inline HalfspaceLabels label_halfspace(const Matrix& points, std::span<const double> normal,
                                       double threshold, double margin) {
  if (normal.size() != points.cols()) {
    throw Error(ErrorCode::InvalidArgument, "normal has " + std::to_string(normal.size()) +
                                                " entries for " + std::to_string(points.cols()) +
                                                " columns");
  }
  if (!(margin >= 0.0)) throw Error(ErrorCode::InvalidArgument, "margin must be nonnegative");
  std::vector<double> kept_values;
  std::vector<Label> labels;
  std::vector<std::size_t> kept;
  std::size_t ones = 0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const auto x = points.row(i);
    double s = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) s += normal[c] * x[c];
    if (std::abs(s - threshold) < margin) continue;
    const Label y = s > threshold ? 1 : 0;
    ones += static_cast<std::size_t>(y);
    labels.push_back(y);
    kept.push_back(i);
    kept_values.insert(kept_values.end(), x.begin(), x.end());
  }
  if (ones == 0 || ones == labels.size()) {
    throw Error(ErrorCode::AllRemoved, "labeling left " + std::to_string(labels.size() - ones) +
                                           " points in class 0 and " + std::to_string(ones) +
                                           " in class 1");
  }
  Matrix out(kept.size(), points.cols(), std::move(kept_values));
  return {LabeledDataset(std::move(out), std::move(labels)), std::move(kept)};
}

struct ScalingSpec {
  std::uint64_t train_size;
  double d_data;
  double k_f;
};

/// Records following ln L = -ln N / d + ln K_F + a_true + eps, eps ~ N(0, noise_sd).
inline std::vector<ScalingRecord> synth_scaling_records(double a_true,
                                                        std::span<const ScalingSpec> specs,
                                                        double noise_sd, std::uint64_t seed) {
  if (!(noise_sd >= 0.0)) throw Error(ErrorCode::InvalidSpec, "noise_sd must be nonnegative");
  Rng rng(seed);
  std::vector<ScalingRecord> out;
  out.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.train_size < 2 || !(s.d_data > 0.0) || !(s.k_f > 0.0)) {
      throw Error(ErrorCode::InvalidSpec, "record spec " + std::to_string(i) + " is not positive");
    }
    const double eps = noise_sd > 0.0 ? noise_sd * rng.normal() : 0.0;
    const double log_loss =
        -std::log(static_cast<double>(s.train_size)) / s.d_data + std::log(s.k_f) + a_true + eps;
    ScalingRecord r;
    r.dataset_id = "synth" + std::to_string(i);
    r.train_size = s.train_size;
    r.d_data = s.d_data;
    r.k_f = s.k_f;
    r.loss = std::exp(log_loss);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ipd

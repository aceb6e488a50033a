#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ipd/error.hpp"

namespace ipd {

/// Dense row-major matrix of doubles. Rows are datapoints, columns features.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    check_dims();
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_dims();
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorCode::InvalidDimensions,
                  "data length " + std::to_string(data_.size()) + " != " + std::to_string(rows_) +
                      " x " + std::to_string(cols_));
    }
  }

  /// Builds a matrix from nested rows; all rows must have equal length.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty() || rows.front().empty()) {
      throw Error(ErrorCode::InvalidDimensions, "matrix needs at least one row and column");
    }
    const std::size_t cols = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw Error(ErrorCode::InvalidDimensions, "ragged rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  void check_dims() const {
    if (rows_ == 0 || cols_ == 0) {
      throw Error(ErrorCode::InvalidDimensions, "matrix needs at least one row and column");
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline void require_finite(const Matrix& m) {
  if (!m.all_finite()) throw Error(ErrorCode::NonFinite, "matrix contains NaN or Inf");
}

using Label = std::int64_t;

/// Points plus one nonnegative integer label per row.
struct LabeledDataset {
  Matrix points;
  std::vector<Label> labels;

  LabeledDataset(Matrix p, std::vector<Label> l) : points(std::move(p)), labels(std::move(l)) {
    if (labels.size() != points.rows()) {
      throw Error(ErrorCode::LabelCountMismatch,
                  std::to_string(labels.size()) + " labels for " +
                      std::to_string(points.rows()) + " points");
    }
    for (Label y : labels) {
      if (y < 0) throw Error(ErrorCode::NegativeLabel, "label " + std::to_string(y));
    }
  }
};

}  // namespace ipd

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace ipd {

/// One generalization measurement: test loss of a model trained on
/// `train_size` examples of a dataset with the given intrinsic properties.
struct ScalingRecord {
  std::string dataset_id;
  std::uint64_t train_size = 0;
  double d_data = 0.0;
  double k_f = 0.0;
  double loss = 0.0;
  std::optional<double> d_repr;
  /// Extra CSV columns beyond the fixed ones, kept for grouping.
  std::map<std::string, std::string> tags;

  friend bool operator==(const ScalingRecord&, const ScalingRecord&) = default;
};

}  // namespace ipd

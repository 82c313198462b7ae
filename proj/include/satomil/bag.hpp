#pragma once

#include <optional>
#include <string>
#include <vector>

#include "satomil/autodiff.hpp"

namespace satomil {

/// One patient: an unordered set of instance vectors and an ordinal label in 1..K.
/// The bag label is the maximum of the (usually unobserved) instance labels.
struct Bag {
  std::string id;
  std::vector<std::vector<double>> instances;
  int label = 1;
  /// Diagnostics only; never consumed by bag-level training.
  std::optional<std::vector<int>> instance_labels;

  std::size_t size() const noexcept { return instances.size(); }
  std::size_t dim() const noexcept { return instances.empty() ? 0 : instances.front().size(); }

  /// Instances stacked as an [n x dim] matrix.
  ad::Tensor matrix() const;

  friend bool operator==(const Bag&, const Bag&) = default;
};

/// Throws ContractError/DimensionError naming the bag if it breaks a Bag invariant.
void validate_bag(const Bag& bag, int k_classes, std::size_t input_dim);

}  // namespace satomil

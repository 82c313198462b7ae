#pragma once

// Synthetic ordinal-MIL data: every bag's label is the max of its instance
// labels, instances are noisy points around colinear, equally spaced class
// means. Also dataset file I/O, oversampling and stratified k-fold.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <vector>

#include "json.hpp"
#include "satomil/bag.hpp"

namespace satomil {

enum class LowClassDist { Uniform, Geometric };

struct GenSpec {
  int k_classes = 4;
  std::size_t input_dim = 16;
  double class_sep = 2.0;    // distance between adjacent class means
  double noise_sigma = 0.75;
  std::size_t bag_size_min = 10;
  std::size_t bag_size_max = 30;
  LowClassDist low_class_dist = LowClassDist::Geometric;
  double geometric_rho = 0.5;  // P(c) proportional to rho^(c-1) on 1..Y
  std::size_t bags_per_class = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const GenSpec& s);

struct Dataset {
  int k_classes = 4;
  std::size_t input_dim = 16;
  std::vector<Bag> bags;

  std::size_t size() const noexcept { return bags.size(); }
  /// Bag count per label 1..K (zero entries included).
  std::map<int, std::size_t> class_counts() const;
  Dataset subset(const std::vector<std::size_t>& indices) const;
  /// Checks every bag invariant, including the max-label rule.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Seed of the generator used for the bag at position `counter`.
std::uint64_t bag_seed(std::uint64_t seed, std::uint64_t counter);

/// The fixed unit direction along which class means are laid out.
std::vector<double> class_direction(std::size_t input_dim);

Dataset generate(const GenSpec& spec);

/// Duplicates bags (sampling with replacement within each class) until every
/// class has as many bags as the largest one. Originals keep their positions.
Dataset oversample(const Dataset& data, std::uint64_t seed);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified split: each class is shuffled and dealt round-robin across
/// folds, continuing where the previous class stopped.
std::vector<Fold> kfold(const Dataset& data, std::size_t folds, std::uint64_t seed);

void write_dataset(std::ostream& out, const Dataset& data, const nlohmann::json& generator = nullptr);
void write_dataset(const std::filesystem::path& path, const Dataset& data,
                   const nlohmann::json& generator = nullptr);
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

inline constexpr const char* kDatasetFormat = "satomil-bags-1";

}  // namespace satomil

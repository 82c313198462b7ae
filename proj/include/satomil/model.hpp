#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "satomil/autodiff.hpp"
#include "satomil/bag.hpp"
#include "satomil/layers.hpp"

namespace satomil {

/// Architecture shared by the SAT and the baselines. Baselines reuse the
/// embedder sizes and, where they have one, the aggregation block sizes.
struct SatConfig {
  int k_classes = 4;
  std::size_t input_dim = 16;
  std::size_t model_dim = 32;
  std::size_t embed_hidden = 32;
  std::size_t mlp_hidden = 32;
  int blocks = 1;
  MaskMode mask_mode = MaskMode::Strict;
  bool residual = true;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const SatConfig& c);
SatConfig sat_config_from_json(const nlohmann::json& j);

std::string_view to_string(MaskMode m);
MaskMode parse_mask_mode(std::string_view s);

enum class ModelKind {
  Sat,
  OutputMean,
  OutputMax,
  FeatureMean,
  FeatureMax,
  GatedAttention,
  SingleTokenTransformer,
  TransformerKRank,
  InstanceSupervisedMax,
};

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);
const std::vector<ModelKind>& all_model_kinds();
/// Human-readable row label for comparison tables.
std::string_view display_name(ModelKind k);

/// What a model's forward() returns.
enum class HeadKind {
  /// [1 x (K-1)] K-rank logits, decoded by counting positives.
  Rank,
  /// [1 x K] class logits, decoded by argmax.
  Class,
  /// [n x (K-1)] per-instance K-rank logits, bag class = max over instances.
  InstanceRank,
};

/// Common surface used by the trainer, checkpointing and the CLI.
class BagModel {
 public:
  virtual ~BagModel() = default;

  virtual ModelKind kind() const = 0;
  virtual HeadKind head() const = 0;
  const SatConfig& config() const noexcept { return config_; }

  /// Logits for one bag; `instances` is the bag's [n x input_dim] matrix.
  virtual ad::Var forward(ad::Tape& tape, ad::Var instances) const = 0;

  /// Training objective for one bag (summed BCE for rank heads, CE otherwise).
  virtual ad::Var loss(ad::Tape& tape, const Bag& bag) const;

  /// Predicted class in 1..K. Safe to call concurrently.
  virtual int predict(const Bag& bag) const;

  ad::ParamList parameters();
  std::vector<const ad::Parameter*> parameters() const;

 protected:
  explicit BagModel(SatConfig config) : config_(std::move(config)) {}
  virtual void collect(ad::ParamList& out) = 0;

  void check_bag(const Bag& bag) const;

 private:
  SatConfig config_;
};

std::unique_ptr<BagModel> make_model(ModelKind kind, const SatConfig& config);

/// Class decoded from a logit row produced by forward().
int decode_output(HeadKind head, const ad::Tensor& logits);

}  // namespace satomil

#pragma once

// Comparison models. All share the SAT's instance embedder so differences
// come from how instances are pooled and how the bag is classified.

#include <vector>

#include "satomil/model.hpp"

namespace satomil {

/// Baselines are the ModelKind values other than Sat.
using BaselineKind = ModelKind;

/// Per-instance K-way scores pooled by mean or elementwise max.
class OutputPoolModel final : public BagModel {
 public:
  OutputPoolModel(const SatConfig& config, bool use_max);
  ModelKind kind() const override { return use_max_ ? ModelKind::OutputMax : ModelKind::OutputMean; }
  HeadKind head() const override { return HeadKind::Class; }
  ad::Var forward(ad::Tape& tape, ad::Var instances) const override;
  /// [n x K] scores before pooling.
  ad::Var instance_scores(ad::Tape& tape, ad::Var instances) const;

 protected:
  void collect(ad::ParamList& out) override;

 private:
  bool use_max_;
  Embedder embedder_;
  Linear classifier_;
};

/// Embeddings pooled by mean or elementwise max, then one K-way classifier.
class FeaturePoolModel final : public BagModel {
 public:
  FeaturePoolModel(const SatConfig& config, bool use_max);
  ModelKind kind() const override { return use_max_ ? ModelKind::FeatureMax : ModelKind::FeatureMean; }
  HeadKind head() const override { return HeadKind::Class; }
  ad::Var forward(ad::Tape& tape, ad::Var instances) const override;

 protected:
  void collect(ad::ParamList& out) override;

 private:
  bool use_max_;
  Embedder embedder_;
  Linear classifier_;
};

/// Gated attention pooling: w^T (tanh(V h) * sigmoid(U h)), softmax over instances.
class GatedAttentionModel final : public BagModel {
 public:
  explicit GatedAttentionModel(const SatConfig& config);
  ModelKind kind() const override { return ModelKind::GatedAttention; }
  HeadKind head() const override { return HeadKind::Class; }
  ad::Var forward(ad::Tape& tape, ad::Var instances) const override;
  /// [1 x n] attention weights over the bag's instances.
  ad::Tensor attention(const ad::Tensor& instances) const;

 protected:
  void collect(ad::ParamList& out) override;

 private:
  ad::Var attention_weights(ad::Tape& tape, ad::Var embedded) const;

  Embedder embedder_;
  Linear gate_tanh_;
  Linear gate_sigmoid_;
  Linear score_;
  Linear classifier_;
};

/// One class token through the SAT block. With a K-way head this is the
/// plain "Transformer" baseline; with K-1 binary heads it is "Transformer
/// K-rank", i.e. the SAT without its selective tokens.
class SingleTokenModel final : public BagModel {
 public:
  SingleTokenModel(const SatConfig& config, bool k_rank);
  ModelKind kind() const override {
    return k_rank_ ? ModelKind::TransformerKRank : ModelKind::SingleTokenTransformer;
  }
  HeadKind head() const override { return k_rank_ ? HeadKind::Rank : HeadKind::Class; }
  ad::Var forward(ad::Tape& tape, ad::Var instances) const override;
  /// [1 x n] class-token attention over instances (last block).
  ad::Tensor attention(const ad::Tensor& instances) const;

 protected:
  void collect(ad::ParamList& out) override;

 private:
  struct Pass {
    ad::Var logits;
    ad::Tensor weights;
  };
  Pass run(ad::Tape& tape, ad::Var instances) const;

  bool k_rank_;
  Embedder embedder_;
  ad::Parameter token_;
  std::vector<AggregationBlock> blocks_;
  Linear head_;
};

/// Instance-level K-rank classifier trained on ground-truth instance labels;
/// the bag prediction is the maximum decoded instance class.
class InstanceMaxModel final : public BagModel {
 public:
  explicit InstanceMaxModel(const SatConfig& config);
  ModelKind kind() const override { return ModelKind::InstanceSupervisedMax; }
  HeadKind head() const override { return HeadKind::InstanceRank; }
  ad::Var forward(ad::Tape& tape, ad::Var instances) const override;
  /// Summed instance-level rank BCE; throws if the bag has no instance labels.
  ad::Var loss(ad::Tape& tape, const Bag& bag) const override;
  std::vector<int> instance_predictions(const Bag& bag) const;

 protected:
  void collect(ad::ParamList& out) override;

 private:
  Embedder embedder_;
  Linear classifier_;
};

struct Dataset;
struct TrainConfig;

/// Trains an InstanceMaxModel on instance labels and predicts each bag as
/// the max over its instances' decoded classes.
std::vector<int> instance_supervised_train_predict(const Dataset& labeled,
                                                   const std::vector<Bag>& bags,
                                                   const SatConfig& model,
                                                   const TrainConfig& train);

}  // namespace satomil

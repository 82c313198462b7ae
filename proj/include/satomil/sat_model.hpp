#pragma once

// Selective Aggregated Transformer.
//
// Each of the K-1 trainable tokens t_k aggregates the bag's instance
// embeddings through masked attention, producing one bag-level feature a_k
// per class boundary. Head g_k turns a_k into the logit for O_k = 1{Y > k}.

#include <string>
#include <vector>

#include "satomil/model.hpp"

namespace satomil {

struct SatParams {
  Embedder embedder;
  ad::Parameter tokens;  // [(K-1) x d]
  std::vector<AggregationBlock> blocks;
  ad::Parameter head_weight;  // [(K-1) x d]; row k is g_k
  ad::Parameter head_bias;    // [1 x (K-1)]

  void collect(ad::ParamList& out);
};

/// Attention of every selective token over one bag, taken from the last block.
struct AttentionRecord {
  std::string bag_id;
  /// [(K-1) x n]; row k is token k's weight on each instance.
  ad::Tensor instance_weights;
  /// [(K-1) x (K-1)]; token-to-token weights. All zero in strict mode; only
  /// the diagonal (self slot) can be nonzero in literal mode.
  ad::Tensor token_weights;
};

struct SatForward {
  ad::Var rank_logits;   // [1 x (K-1)], k = 1..K-1
  ad::Var bag_features;  // [(K-1) x d]
  AttentionRecord attention;
};

/// Glorot-uniform weights, N(0, 0.02) tokens, unit LayerNorm gain, zero heads.
SatParams init_sat(const SatConfig& config);

SatForward sat_forward(ad::Tape& tape, const SatConfig& config, const SatParams& params,
                       ad::Var instances, const std::string& bag_id = {});

class SatModel final : public BagModel {
 public:
  explicit SatModel(const SatConfig& config);

  ModelKind kind() const override { return ModelKind::Sat; }
  HeadKind head() const override { return HeadKind::Rank; }
  ad::Var forward(ad::Tape& tape, ad::Var instances) const override;

  SatForward forward_full(ad::Tape& tape, const Bag& bag) const;
  AttentionRecord attention(const Bag& bag) const;

  SatParams& params() noexcept { return params_; }
  const SatParams& params() const noexcept { return params_; }

 protected:
  void collect(ad::ParamList& out) override { params_.collect(out); }

 private:
  SatParams params_;
};

}  // namespace satomil

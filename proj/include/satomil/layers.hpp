#pragma once

// Building blocks shared by the SAT and every baseline: affine maps, the
// instance embedder, LayerNorm affine pairs, and the token-aggregation block.

#include <cstdint>
#include <random>
#include <string>

#include "satomil/autodiff.hpp"

namespace satomil {

using Rng = std::mt19937_64;

enum class MaskMode {
  /// Tokens attend to instances only; masking happens before the softmax.
  Strict,
  /// Tokens also see their own slot; softmax spans every position and the
  /// mask multiplies the normalized weights afterwards.
  Literal,
};

/// y = x W + b with W stored [in x out].
struct Linear {
  ad::Parameter weight;
  ad::Parameter bias;

  ad::Var apply(ad::Tape& tape, ad::Var x) const;
  void collect(ad::ParamList& out);
  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }
};

/// Glorot-uniform weight, zero bias.
Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
Linear make_zero_linear(const std::string& name, std::size_t in, std::size_t out);

struct LayerNormAffine {
  ad::Parameter gain;
  ad::Parameter bias;

  ad::Var apply(ad::Tape& tape, ad::Var x) const;
  void collect(ad::ParamList& out);
};

LayerNormAffine make_layer_norm(const std::string& name, std::size_t dim);

/// Two-layer perceptron input_dim -> hidden -> model_dim with a ReLU between.
struct Embedder {
  Linear hidden;
  Linear out;

  ad::Var apply(ad::Tape& tape, ad::Var x) const;
  void collect(ad::ParamList& out_params);
};

Embedder make_embedder(std::size_t input_dim, std::size_t hidden, std::size_t model_dim, Rng& rng);

/// Pre-LN block in which a set of tokens aggregates instance features.
///
/// The token projection is called `key` and the all-position projection
/// `query`, following the naming of the original method; the score between
/// token k and position l is key_k . query_l / sqrt(d).
struct AggregationBlock {
  LayerNormAffine norm1;
  Linear key;
  Linear query;
  Linear value;
  LayerNormAffine norm2;
  Linear mlp_in;
  Linear mlp_out;

  void collect(ad::ParamList& out);
};

AggregationBlock make_block(const std::string& prefix, std::size_t model_dim,
                            std::size_t mlp_hidden, Rng& rng);

struct BlockResult {
  ad::Var tokens;           // [m x d]
  ad::Tensor attention;     // [m x (m + n)], token slots first
};

/// Mask of shape [m x (m + n)] for m tokens and n instances.
ad::Tensor token_mask(std::size_t tokens, std::size_t instances, MaskMode mode);

BlockResult run_block(ad::Tape& tape, const AggregationBlock& block, ad::Var tokens,
                      ad::Var instances, MaskMode mode, bool residual);

}  // namespace satomil

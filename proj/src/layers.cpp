#include "satomil/layers.hpp"

#include <cmath>

namespace satomil {

ad::Var Linear::apply(ad::Tape& tape, ad::Var x) const {
  return ad::add_row(ad::matmul(x, tape.param(weight)), tape.param(bias));
}

void Linear::collect(ad::ParamList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor w(in, out);
  for (double& v : w.data()) v = dist(rng);
  return {ad::Parameter(name + ".weight", std::move(w)),
          ad::Parameter(name + ".bias", ad::Tensor(1, out))};
}

Linear make_zero_linear(const std::string& name, std::size_t in, std::size_t out) {
  return {ad::Parameter(name + ".weight", ad::Tensor(in, out)),
          ad::Parameter(name + ".bias", ad::Tensor(1, out))};
}

ad::Var LayerNormAffine::apply(ad::Tape& tape, ad::Var x) const {
  return ad::layer_norm(x, tape.param(gain), tape.param(bias));
}

void LayerNormAffine::collect(ad::ParamList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

LayerNormAffine make_layer_norm(const std::string& name, std::size_t dim) {
  return {ad::Parameter(name + ".gain", ad::Tensor(1, dim, 1.0)),
          ad::Parameter(name + ".bias", ad::Tensor(1, dim))};
}

ad::Var Embedder::apply(ad::Tape& tape, ad::Var x) const {
  return out.apply(tape, ad::relu(hidden.apply(tape, x)));
}

void Embedder::collect(ad::ParamList& out_params) {
  hidden.collect(out_params);
  out.collect(out_params);
}

Embedder make_embedder(std::size_t input_dim, std::size_t hidden, std::size_t model_dim, Rng& rng) {
  Linear h = make_linear("embed.hidden", input_dim, hidden, rng);
  Linear o = make_linear("embed.out", hidden, model_dim, rng);
  return {std::move(h), std::move(o)};
}

void AggregationBlock::collect(ad::ParamList& out) {
  norm1.collect(out);
  key.collect(out);
  query.collect(out);
  value.collect(out);
  norm2.collect(out);
  mlp_in.collect(out);
  mlp_out.collect(out);
}

AggregationBlock make_block(const std::string& prefix, std::size_t model_dim,
                            std::size_t mlp_hidden, Rng& rng) {
  AggregationBlock b;
  b.norm1 = make_layer_norm(prefix + ".norm1", model_dim);
  b.key = make_linear(prefix + ".key", model_dim, model_dim, rng);
  b.query = make_linear(prefix + ".query", model_dim, model_dim, rng);
  b.value = make_linear(prefix + ".value", model_dim, model_dim, rng);
  b.norm2 = make_layer_norm(prefix + ".norm2", model_dim);
  b.mlp_in = make_linear(prefix + ".mlp_in", model_dim, mlp_hidden, rng);
  b.mlp_out = make_linear(prefix + ".mlp_out", mlp_hidden, model_dim, rng);
  return b;
}

ad::Tensor token_mask(std::size_t tokens, std::size_t instances, MaskMode mode) {
  ad::Tensor mask(tokens, tokens + instances, 1.0);
  for (std::size_t k = 0; k < tokens; ++k) {
    for (std::size_t l = 0; l < tokens; ++l) {
      const bool keep_self = mode == MaskMode::Literal && l == k;
      mask(k, l) = keep_self ? 1.0 : 0.0;
    }
  }
  return mask;
}

BlockResult run_block(ad::Tape& tape, const AggregationBlock& block, ad::Var tokens,
                      ad::Var instances, MaskMode mode, bool residual) {
  const std::size_t m = tokens.rows();
  const std::size_t n = instances.rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(tokens.cols()));

  const ad::Var all = ad::concat_rows(tokens, instances);
  const ad::Var normed = block.norm1.apply(tape, all);
  const ad::Var token_keys = block.key.apply(tape, ad::slice_rows(normed, 0, m));
  const ad::Var queries = block.query.apply(tape, normed);
  const ad::Var values = block.value.apply(tape, normed);

  const ad::Var scores = ad::scale(ad::matmul(token_keys, ad::transpose(queries)), inv_sqrt_d);
  const ad::Var weights =
      ad::masked_softmax(scores, token_mask(m, n, mode),
                         mode == MaskMode::Strict ? ad::MaskApply::PreSoftmax
                                                  : ad::MaskApply::PostSoftmax);
  const ad::Var aggregated = ad::matmul(weights, values);

  const ad::Var hidden = residual ? ad::add(tokens, aggregated) : aggregated;
  ad::Var mlp = block.mlp_in.apply(tape, block.norm2.apply(tape, hidden));
  mlp = block.mlp_out.apply(tape, ad::relu(mlp));
  const ad::Var out = residual ? ad::add(hidden, mlp) : mlp;
  return {out, weights.value()};
}

}  // namespace satomil

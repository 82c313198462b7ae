#include "satomil/sat_model.hpp"

#include "satomil/error.hpp"

namespace satomil {

void SatParams::collect(ad::ParamList& out) {
  embedder.collect(out);
  out.push_back(&tokens);
  for (auto& b : blocks) b.collect(out);
  out.push_back(&head_weight);
  out.push_back(&head_bias);
}

SatParams init_sat(const SatConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.model_dim;
  const auto ranks = static_cast<std::size_t>(config.k_classes - 1);

  SatParams p;
  p.embedder = make_embedder(config.input_dim, config.embed_hidden, d, rng);

  std::normal_distribution<double> token_dist(0.0, 0.02);
  ad::Tensor tokens(ranks, d);
  for (double& v : tokens.data()) v = token_dist(rng);
  p.tokens = ad::Parameter("tokens", std::move(tokens));

  for (int b = 0; b < config.blocks; ++b) {
    p.blocks.push_back(make_block("block" + std::to_string(b), d, config.mlp_hidden, rng));
  }
  p.head_weight = ad::Parameter("heads.weight", ad::Tensor(ranks, d));
  p.head_bias = ad::Parameter("heads.bias", ad::Tensor(1, ranks));
  return p;
}

SatForward sat_forward(ad::Tape& tape, const SatConfig& config, const SatParams& params,
                       ad::Var instances, const std::string& bag_id) {
  if (instances.rows() == 0) throw ContractError("sat_forward: empty bag '" + bag_id + "'");
  if (instances.cols() != config.input_dim) {
    throw DimensionError("sat_forward: bag '" + bag_id + "' has instance dim " +
                         std::to_string(instances.cols()) + ", model expects " +
                         std::to_string(config.input_dim));
  }
  const std::size_t ranks = static_cast<std::size_t>(config.k_classes - 1);
  const std::size_t n = instances.rows();

  const ad::Var embedded = params.embedder.apply(tape, instances);
  ad::Var tokens = tape.param(params.tokens);
  ad::Tensor weights;
  for (const auto& block : params.blocks) {
    // Instance embeddings are carried unchanged; only the tokens are updated.
    BlockResult r = run_block(tape, block, tokens, embedded, config.mask_mode, config.residual);
    tokens = r.tokens;
    weights = std::move(r.attention);
  }

  // g_k(a_k) = <a_k, w_k> + b_k for every k at once.
  const ad::Var per_rank = ad::sum_cols(ad::mul(tokens, tape.param(params.head_weight)));
  const ad::Var logits = ad::add_row(ad::transpose(per_rank), tape.param(params.head_bias));

  AttentionRecord rec{bag_id, ad::Tensor(ranks, n), ad::Tensor(ranks, ranks)};
  for (std::size_t k = 0; k < ranks; ++k) {
    for (std::size_t l = 0; l < ranks; ++l) rec.token_weights(k, l) = weights(k, l);
    for (std::size_t j = 0; j < n; ++j) rec.instance_weights(k, j) = weights(k, ranks + j);
  }
  return {logits, tokens, std::move(rec)};
}

SatModel::SatModel(const SatConfig& config) : BagModel(config), params_(init_sat(config)) {}

ad::Var SatModel::forward(ad::Tape& tape, ad::Var instances) const {
  return sat_forward(tape, config(), params_, instances).rank_logits;
}

SatForward SatModel::forward_full(ad::Tape& tape, const Bag& bag) const {
  check_bag(bag);
  return sat_forward(tape, config(), params_, tape.constant(bag.matrix()), bag.id);
}

AttentionRecord SatModel::attention(const Bag& bag) const {
  ad::Tape tape(false);
  return forward_full(tape, bag).attention;
}

}  // namespace satomil

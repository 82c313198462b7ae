#include "satomil/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "satomil/datagen.hpp"
#include "satomil/error.hpp"
#include "satomil/ordinal.hpp"
#include "satomil/trainer.hpp"

namespace satomil {

namespace {

std::size_t classes(const SatConfig& c) { return static_cast<std::size_t>(c.k_classes); }
std::size_t ranks(const SatConfig& c) { return static_cast<std::size_t>(c.k_classes - 1); }

void check_input(const SatConfig& c, ad::Var instances) {
  if (instances.rows() == 0) throw ContractError("baseline forward: empty bag");
  if (instances.cols() != c.input_dim) {
    throw DimensionError("baseline forward: instance dim " + std::to_string(instances.cols()) +
                         ", model expects " + std::to_string(c.input_dim));
  }
}

}  // namespace

// ---- output pooling -----------------------------------------------------

OutputPoolModel::OutputPoolModel(const SatConfig& config, bool use_max)
    : BagModel(config), use_max_(use_max) {
  config.validate();
  Rng rng(config.seed);
  embedder_ = make_embedder(config.input_dim, config.embed_hidden, config.model_dim, rng);
  classifier_ = make_zero_linear("classifier", config.model_dim, classes(config));
}

ad::Var OutputPoolModel::instance_scores(ad::Tape& tape, ad::Var instances) const {
  check_input(config(), instances);
  return classifier_.apply(tape, embedder_.apply(tape, instances));
}

ad::Var OutputPoolModel::forward(ad::Tape& tape, ad::Var instances) const {
  const ad::Var scores = instance_scores(tape, instances);
  return use_max_ ? ad::max_rows(scores) : ad::mean_rows(scores);
}

void OutputPoolModel::collect(ad::ParamList& out) {
  embedder_.collect(out);
  classifier_.collect(out);
}

// ---- feature pooling ----------------------------------------------------

FeaturePoolModel::FeaturePoolModel(const SatConfig& config, bool use_max)
    : BagModel(config), use_max_(use_max) {
  config.validate();
  Rng rng(config.seed);
  embedder_ = make_embedder(config.input_dim, config.embed_hidden, config.model_dim, rng);
  classifier_ = make_zero_linear("classifier", config.model_dim, classes(config));
}

ad::Var FeaturePoolModel::forward(ad::Tape& tape, ad::Var instances) const {
  check_input(config(), instances);
  const ad::Var e = embedder_.apply(tape, instances);
  return classifier_.apply(tape, use_max_ ? ad::max_rows(e) : ad::mean_rows(e));
}

void FeaturePoolModel::collect(ad::ParamList& out) {
  embedder_.collect(out);
  classifier_.collect(out);
}

// ---- gated attention ----------------------------------------------------

GatedAttentionModel::GatedAttentionModel(const SatConfig& config) : BagModel(config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.model_dim;
  embedder_ = make_embedder(config.input_dim, config.embed_hidden, d, rng);
  gate_tanh_ = make_linear("gate.tanh", d, d, rng);
  gate_sigmoid_ = make_linear("gate.sigmoid", d, d, rng);
  score_ = make_linear("gate.score", d, 1, rng);
  classifier_ = make_zero_linear("classifier", d, classes(config));
}

ad::Var GatedAttentionModel::attention_weights(ad::Tape& tape, ad::Var embedded) const {
  const ad::Var gated = ad::mul(ad::tanh(gate_tanh_.apply(tape, embedded)),
                                ad::sigmoid(gate_sigmoid_.apply(tape, embedded)));
  return ad::softmax_rows(ad::transpose(score_.apply(tape, gated)));
}

ad::Var GatedAttentionModel::forward(ad::Tape& tape, ad::Var instances) const {
  check_input(config(), instances);
  const ad::Var e = embedder_.apply(tape, instances);
  return classifier_.apply(tape, ad::matmul(attention_weights(tape, e), e));
}

ad::Tensor GatedAttentionModel::attention(const ad::Tensor& instances) const {
  ad::Tape tape(false);
  const ad::Var x = tape.constant(instances);
  check_input(config(), x);
  return attention_weights(tape, embedder_.apply(tape, x)).value();
}

void GatedAttentionModel::collect(ad::ParamList& out) {
  embedder_.collect(out);
  gate_tanh_.collect(out);
  gate_sigmoid_.collect(out);
  score_.collect(out);
  classifier_.collect(out);
}

// ---- single class token -------------------------------------------------

SingleTokenModel::SingleTokenModel(const SatConfig& config, bool k_rank)
    : BagModel(config), k_rank_(k_rank) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.model_dim;
  embedder_ = make_embedder(config.input_dim, config.embed_hidden, d, rng);
  std::normal_distribution<double> token_dist(0.0, 0.02);
  ad::Tensor token(1, d);
  for (double& v : token.data()) v = token_dist(rng);
  token_ = ad::Parameter("class_token", std::move(token));
  for (int b = 0; b < config.blocks; ++b) {
    blocks_.push_back(make_block("block" + std::to_string(b), d, config.mlp_hidden, rng));
  }
  head_ = make_zero_linear("head", d, k_rank ? ranks(config) : classes(config));
}

SingleTokenModel::Pass SingleTokenModel::run(ad::Tape& tape, ad::Var instances) const {
  check_input(config(), instances);
  const ad::Var e = embedder_.apply(tape, instances);
  ad::Var token = tape.param(token_);
  ad::Tensor weights;
  for (const auto& block : blocks_) {
    BlockResult r = run_block(tape, block, token, e, config().mask_mode, config().residual);
    token = r.tokens;
    weights = std::move(r.attention);
  }
  return {head_.apply(tape, token), std::move(weights)};
}

ad::Var SingleTokenModel::forward(ad::Tape& tape, ad::Var instances) const {
  return run(tape, instances).logits;
}

ad::Tensor SingleTokenModel::attention(const ad::Tensor& instances) const {
  ad::Tape tape(false);
  const ad::Tensor w = run(tape, tape.constant(instances)).weights;
  ad::Tensor out(1, instances.rows());
  for (std::size_t j = 0; j < instances.rows(); ++j) out[j] = w(0, 1 + j);
  return out;
}

void SingleTokenModel::collect(ad::ParamList& out) {
  embedder_.collect(out);
  out.push_back(&token_);
  for (auto& b : blocks_) b.collect(out);
  head_.collect(out);
}

// ---- instance-supervised max --------------------------------------------

InstanceMaxModel::InstanceMaxModel(const SatConfig& config) : BagModel(config) {
  config.validate();
  Rng rng(config.seed);
  embedder_ = make_embedder(config.input_dim, config.embed_hidden, config.model_dim, rng);
  classifier_ = make_zero_linear("classifier", config.model_dim, ranks(config));
}

ad::Var InstanceMaxModel::forward(ad::Tape& tape, ad::Var instances) const {
  check_input(config(), instances);
  return classifier_.apply(tape, embedder_.apply(tape, instances));
}

ad::Var InstanceMaxModel::loss(ad::Tape& tape, const Bag& bag) const {
  check_bag(bag);
  if (!bag.instance_labels) {
    throw ContractError("instance-supervised model needs instance labels (bag '" + bag.id + "')");
  }
  std::vector<ordinal::KRankTarget> targets;
  targets.reserve(bag.size());
  for (int y : *bag.instance_labels) targets.push_back(ordinal::encode(y, config().k_classes));
  return ordinal::rank_bce_loss(forward(tape, tape.constant(bag.matrix())), targets);
}

std::vector<int> InstanceMaxModel::instance_predictions(const Bag& bag) const {
  check_bag(bag);
  ad::Tape tape(false);
  const ad::Tensor& logits = forward(tape, tape.constant(bag.matrix())).value();
  std::vector<int> out;
  out.reserve(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out.push_back(ordinal::decode_logits(logits.row_span(i)));
  return out;
}

void InstanceMaxModel::collect(ad::ParamList& out) {
  embedder_.collect(out);
  classifier_.collect(out);
}

std::vector<int> instance_supervised_train_predict(const Dataset& labeled,
                                                   const std::vector<Bag>& bags,
                                                   const SatConfig& model,
                                                   const TrainConfig& train) {
  for (const Bag& b : labeled.bags) {
    if (!b.instance_labels) {
      throw ContractError("instance_supervised_train_predict: bag '" + b.id +
                          "' has no instance labels");
    }
  }
  TrainConfig cfg = train;
  cfg.objective = ModelKind::InstanceSupervisedMax;
  const TrainResult result = train_with_validation_split(labeled, model, cfg);
  std::vector<int> preds;
  preds.reserve(bags.size());
  for (const Bag& b : bags) preds.push_back(result.model->predict(b));
  return preds;
}

}  // namespace satomil

#include "satomil/model.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "satomil/baselines.hpp"
#include "satomil/error.hpp"
#include "satomil/ordinal.hpp"
#include "satomil/sat_model.hpp"

namespace satomil {

// ---- Bag ----------------------------------------------------------------

ad::Tensor Bag::matrix() const {
  const std::size_t d = dim();
  std::vector<double> data;
  data.reserve(size() * d);
  for (const auto& x : instances) {
    if (x.size() != d) throw DimensionError("bag '" + id + "' has ragged instance vectors");
    data.insert(data.end(), x.begin(), x.end());
  }
  return ad::Tensor(size(), d, std::move(data));
}

void validate_bag(const Bag& bag, int k_classes, std::size_t input_dim) {
  if (bag.instances.empty()) throw ContractError("bag '" + bag.id + "' has no instances");
  if (bag.label < 1 || bag.label > k_classes) {
    throw ContractError("bag '" + bag.id + "' label " + std::to_string(bag.label) +
                        " outside 1.." + std::to_string(k_classes));
  }
  for (const auto& x : bag.instances) {
    if (x.size() != input_dim) {
      throw DimensionError("bag '" + bag.id + "' has an instance of dimension " +
                           std::to_string(x.size()) + ", expected " + std::to_string(input_dim));
    }
  }
  if (bag.instance_labels) {
    const auto& labels = *bag.instance_labels;
    if (labels.size() != bag.instances.size()) {
      throw ContractError("bag '" + bag.id + "' has " + std::to_string(labels.size()) +
                          " instance labels for " + std::to_string(bag.instances.size()) +
                          " instances");
    }
    for (int y : labels) {
      if (y < 1 || y > k_classes) {
        throw ContractError("bag '" + bag.id + "' instance label " + std::to_string(y) +
                            " out of range");
      }
    }
    if (*std::max_element(labels.begin(), labels.end()) != bag.label) {
      throw ContractError("bag '" + bag.id + "' label is not the max of its instance labels");
    }
  }
}

// ---- config -------------------------------------------------------------

void SatConfig::validate() const {
  if (k_classes < 2) throw ContractError("config: k_classes must be >= 2");
  if (input_dim < 1 || model_dim < 1 || embed_hidden < 1 || mlp_hidden < 1) {
    throw ContractError("config: dimensions must be >= 1");
  }
  if (blocks < 1) throw ContractError("config: blocks must be >= 1");
}

std::string_view to_string(MaskMode m) { return m == MaskMode::Strict ? "strict" : "literal"; }

MaskMode parse_mask_mode(std::string_view s) {
  if (s == "strict") return MaskMode::Strict;
  if (s == "literal") return MaskMode::Literal;
  throw ContractError("unknown mask mode '" + std::string(s) + "'");
}

nlohmann::json to_json(const SatConfig& c) {
  return {{"k_classes", c.k_classes},     {"input_dim", c.input_dim},
          {"model_dim", c.model_dim},     {"embed_hidden", c.embed_hidden},
          {"mlp_hidden", c.mlp_hidden},   {"blocks", c.blocks},
          {"mask_mode", to_string(c.mask_mode)}, {"residual", c.residual},
          {"seed", c.seed}};
}

SatConfig sat_config_from_json(const nlohmann::json& j) {
  SatConfig c;
  c.k_classes = j.at("k_classes").get<int>();
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.model_dim = j.at("model_dim").get<std::size_t>();
  c.embed_hidden = j.at("embed_hidden").get<std::size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
  c.blocks = j.at("blocks").get<int>();
  c.mask_mode = parse_mask_mode(j.at("mask_mode").get<std::string>());
  c.residual = j.at("residual").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

// ---- kinds --------------------------------------------------------------

namespace {

struct KindInfo {
  ModelKind kind;
  std::string_view tag;
  std::string_view display;
};

constexpr std::array<KindInfo, 9> kKinds{{
    {ModelKind::OutputMean, "output-mean", "Output+Mean"},
    {ModelKind::OutputMax, "output-max", "Output+Max"},
    {ModelKind::FeatureMean, "feature-mean", "Feature+Mean"},
    {ModelKind::FeatureMax, "feature-max", "Feature+Max"},
    {ModelKind::GatedAttention, "gated-attention", "Feature+Attention"},
    {ModelKind::SingleTokenTransformer, "transformer", "Transformer"},
    {ModelKind::TransformerKRank, "transformer-krank", "Transformer K-rank"},
    {ModelKind::InstanceSupervisedMax, "instance-max", "Instance-supervised Max"},
    {ModelKind::Sat, "sat", "SAT (ours)"},
}};

const KindInfo& info(ModelKind k) {
  return *std::find_if(kKinds.begin(), kKinds.end(), [k](const KindInfo& i) { return i.kind == k; });
}

}  // namespace

std::string_view to_string(ModelKind k) { return info(k).tag; }
std::string_view display_name(ModelKind k) { return info(k).display; }

ModelKind parse_model_kind(std::string_view s) {
  for (const auto& i : kKinds) {
    if (i.tag == s) return i.kind;
  }
  throw ContractError("unknown model kind '" + std::string(s) + "'");
}

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = [] {
    std::vector<ModelKind> v;
    for (const auto& i : kKinds) v.push_back(i.kind);
    return v;
  }();
  return kinds;
}

// ---- BagModel -----------------------------------------------------------

int decode_output(HeadKind head, const ad::Tensor& logits) {
  switch (head) {
    case HeadKind::Rank:
      return ordinal::decode_logits(logits.data());
    case HeadKind::Class: {
      const auto d = logits.data();
      return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin()) + 1;
    }
    case HeadKind::InstanceRank: {
      int best = 1;
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        best = std::max(best, ordinal::decode_logits(logits.row_span(i)));
      }
      return best;
    }
  }
  return 1;
}

void BagModel::check_bag(const Bag& bag) const {
  if (bag.instances.empty()) throw ContractError("bag '" + bag.id + "' has no instances");
  if (bag.dim() != config_.input_dim) {
    throw DimensionError("bag '" + bag.id + "' has instance dim " + std::to_string(bag.dim()) +
                         ", model expects " + std::to_string(config_.input_dim));
  }
  if (bag.label < 1 || bag.label > config_.k_classes) {
    throw ContractError("bag '" + bag.id + "' label outside 1.." +
                        std::to_string(config_.k_classes));
  }
}

ad::Var BagModel::loss(ad::Tape& tape, const Bag& bag) const {
  check_bag(bag);
  const ad::Var logits = forward(tape, tape.constant(bag.matrix()));
  switch (head()) {
    case HeadKind::Rank: {
      const ordinal::KRankTarget target = ordinal::encode(bag.label, config_.k_classes);
      return ordinal::rank_bce_loss(logits, std::span(&target, 1));
    }
    case HeadKind::Class:
      return ad::softmax_cross_entropy(logits, static_cast<std::size_t>(bag.label - 1));
    case HeadKind::InstanceRank:
      break;
  }
  throw ContractError("model kind '" + std::string(to_string(kind())) +
                      "' must override loss()");
}

int BagModel::predict(const Bag& bag) const {
  if (bag.instances.empty()) throw ContractError("bag '" + bag.id + "' has no instances");
  if (bag.dim() != config_.input_dim) {
    throw DimensionError("bag '" + bag.id + "' has instance dim " + std::to_string(bag.dim()) +
                         ", model expects " + std::to_string(config_.input_dim));
  }
  ad::Tape tape(false);
  return decode_output(head(), forward(tape, tape.constant(bag.matrix())).value());
}

ad::ParamList BagModel::parameters() {
  ad::ParamList out;
  collect(out);
  return out;
}

std::vector<const ad::Parameter*> BagModel::parameters() const {
  ad::ParamList mut;
  const_cast<BagModel*>(this)->collect(mut);
  return {mut.begin(), mut.end()};
}

std::unique_ptr<BagModel> make_model(ModelKind kind, const SatConfig& config) {
  switch (kind) {
    case ModelKind::Sat: return std::make_unique<SatModel>(config);
    case ModelKind::OutputMean: return std::make_unique<OutputPoolModel>(config, false);
    case ModelKind::OutputMax: return std::make_unique<OutputPoolModel>(config, true);
    case ModelKind::FeatureMean: return std::make_unique<FeaturePoolModel>(config, false);
    case ModelKind::FeatureMax: return std::make_unique<FeaturePoolModel>(config, true);
    case ModelKind::GatedAttention: return std::make_unique<GatedAttentionModel>(config);
    case ModelKind::SingleTokenTransformer: return std::make_unique<SingleTokenModel>(config, false);
    case ModelKind::TransformerKRank: return std::make_unique<SingleTokenModel>(config, true);
    case ModelKind::InstanceSupervisedMax: return std::make_unique<InstanceMaxModel>(config);
  }
  throw ContractError("make_model: unknown kind");
}

}  // namespace satomil

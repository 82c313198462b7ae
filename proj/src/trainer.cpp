#include "satomil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "satomil/error.hpp"

namespace satomil {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(eps > 0.0)) throw ContractError("train: lr and eps must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ContractError("train: betas must lie in (0, 1)");
  }
  if (epochs < 1 || batch_size < 1) throw ContractError("train: epochs and batch size must be >= 1");
  if (patience < 0 || patience > epochs) throw ContractError("train: need 0 <= patience <= epochs");
}

TrainConfig TrainConfig::paper_limuc() {
  TrainConfig c;
  c.learning_rate = 3e-6;
  c.epochs = 1500;
  c.batch_size = 32;
  c.patience = 100;
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"eps", c.eps},
          {"epochs", c.epochs},               {"batch_size", c.batch_size},
          {"patience", c.patience},           {"seed", c.seed},
          {"objective", to_string(c.objective)}};
}

// ---- Adam ---------------------------------------------------------------

AdamState make_adam_state(const ad::ParamList& params) {
  AdamState s;
  for (const ad::Parameter* p : params) {
    s.m.emplace_back(p->value.rows(), p->value.cols());
    s.v.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

void adam_step(const ad::ParamList& params, AdamState& state, const TrainConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: state does not match parameter list");
  }
  for (const ad::Parameter* p : params) {
    if (!p->grad.same_shape(p->value)) throw DimensionError("adam_step: '" + p->name + "' grad shape");
    if (!p->grad.all_finite()) throw NumericError("adam_step: non-finite gradient in '" + p->name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i]->value.data();
    const auto g = params[i]->grad.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

// ---- history ------------------------------------------------------------

nlohmann::json to_json(const EpochRecord& r) {
  return {{"epoch", r.epoch},
          {"train_loss", r.train_loss},
          {"val_accuracy", r.val_accuracy},
          {"val_qwk", r.val_qwk},
          {"val_macro_f1", r.val_macro_f1}};
}

void write_history(std::ostream& out, const std::vector<EpochRecord>& history) {
  for (const auto& r : history) out << to_json(r).dump() << '\n';
}

void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history " + path.string());
  write_history(out, history);
}

// ---- training -----------------------------------------------------------

metrics::MetricsReport evaluate(const BagModel& model, const Dataset& data) {
  if (data.k_classes != model.config().k_classes) {
    throw ContractError("evaluate: dataset has K=" + std::to_string(data.k_classes) +
                        ", model has K=" + std::to_string(model.config().k_classes));
  }
  metrics::ConfusionMatrix cm(data.k_classes);
  for (const Bag& b : data.bags) cm.add(b.label, model.predict(b));
  return metrics::report(cm);
}

namespace {

std::vector<ad::Tensor> snapshot(const ad::ParamList& params) {
  std::vector<ad::Tensor> out;
  out.reserve(params.size());
  for (const ad::Parameter* p : params) out.push_back(p->value);
  return out;
}

// Mean validation loss, or NaN when the model's loss cannot be evaluated on
// these bags (instance-supervised model without instance labels).
double validation_loss(const BagModel& model, const Dataset& val) {
  double total = 0.0;
  for (const Bag& b : val.bags) {
    if (model.head() == HeadKind::InstanceRank && !b.instance_labels) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    ad::Tape tape(false);
    total += model.loss(tape, b).value()[0];
  }
  return total / static_cast<double>(val.bags.size());
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& val_set, const SatConfig& model_config,
                  const TrainConfig& config, const ProgressFn& progress) {
  config.validate();
  if (train_set.bags.empty()) throw ContractError("train: empty training set");
  if (val_set.bags.empty()) throw ContractError("train: empty validation set");
  if (train_set.k_classes != model_config.k_classes ||
      train_set.input_dim != model_config.input_dim) {
    throw ContractError("train: dataset (K=" + std::to_string(train_set.k_classes) + ", dim=" +
                        std::to_string(train_set.input_dim) + ") does not match model config");
  }

  const Dataset data = oversample(train_set, config.seed);
  TrainResult result;
  result.model = make_model(config.objective, model_config);
  BagModel& model = *result.model;
  const ad::ParamList params = model.parameters();
  AdamState adam = make_adam_state(params);

  std::vector<ad::Tensor> best = snapshot(params);
  double best_qwk = -std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  bool first_batch = true;

  std::vector<std::size_t> order(data.bags.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng(bag_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      for (ad::Parameter* p : params) p->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        ad::Tape tape;
        const ad::Var loss = model.loss(tape, data.bags[order[i]]);
        batch_loss += loss.value()[0];
        tape.backward(loss);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));
      }
      if (first_batch) {
        result.first_batch_loss_per_bag = batch_loss / static_cast<double>(stop - start);
        first_batch = false;
      }
      epoch_loss += batch_loss;
      adam_step(params, adam, config);
    }

    const metrics::MetricsReport val = evaluate(model, val_set);
    EpochRecord rec{epoch, epoch_loss / static_cast<double>(data.bags.size()), val.accuracy,
                    val.qwk, val.macro_f1};
    result.history.push_back(rec);
    if (progress) progress(rec);

    bool improved = val.qwk > best_qwk;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    if (improved || val.qwk == best_qwk) {
      val_loss = validation_loss(model, val_set);
      improved = improved || val_loss < best_loss;
    }
    if (improved) {
      best_qwk = val.qwk;
      best_loss = val_loss;
      result.best_epoch = epoch;
      best = snapshot(params);
      stale = 0;
    } else if (++stale > config.patience) {
      break;
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  result.best_val_qwk = best_qwk;
  return result;
}

TrainValSplit validation_split(const Dataset& data, std::uint64_t seed) {
  const std::vector<Fold> split = kfold(data, 5, seed ^ 0x76616CULL);
  return {data.subset(split[0].train), data.subset(split[0].test)};
}

TrainResult train_with_validation_split(const Dataset& data, const SatConfig& model,
                                        const TrainConfig& config, const ProgressFn& progress) {
  const TrainValSplit split = validation_split(data, config.seed);
  return train(split.train, split.validation, model, config, progress);
}

// ---- cross-validation ---------------------------------------------------

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.std = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}

nlohmann::json to_json(const MetricSummary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"min", s.min}, {"max", s.max}};
}

}  // namespace

nlohmann::json to_json(const CvResult& r) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : r.folds) folds.push_back(metrics::to_json(f));
  return {{"folds", std::move(folds)},
          {"accuracy", to_json(r.accuracy)},
          {"qwk", to_json(r.qwk)},
          {"macro_f1", to_json(r.macro_f1)}};
}

CvResult cross_validate(const Dataset& data, std::size_t folds, const SatConfig& model,
                        const TrainConfig& config, unsigned workers,
                        const std::function<void(std::size_t, const EpochRecord&)>& progress) {
  const std::vector<Fold> split = kfold(data, folds, config.seed);

  auto run_fold = [&](std::size_t f) {
    TrainConfig tc = config;
    tc.seed = bag_seed(config.seed, 1000 + f);
    SatConfig mc = model;
    mc.seed = bag_seed(model.seed, 2000 + f);
    ProgressFn fold_progress;
    if (progress) fold_progress = [&progress, f](const EpochRecord& r) { progress(f, r); };
    const TrainResult tr = train_with_validation_split(data.subset(split[f].train), mc, tc, fold_progress);
    return evaluate(*tr.model, data.subset(split[f].test));
  };

  CvResult out;
  out.folds.resize(folds);
  if (workers <= 1) {
    for (std::size_t f = 0; f < folds; ++f) out.folds[f] = run_fold(f);
  } else {
    for (std::size_t start = 0; start < folds; start += workers) {
      std::vector<std::future<metrics::MetricsReport>> jobs;
      for (std::size_t f = start; f < std::min<std::size_t>(folds, start + workers); ++f) {
        jobs.push_back(std::async(std::launch::async, run_fold, f));
      }
      for (std::size_t i = 0; i < jobs.size(); ++i) out.folds[start + i] = jobs[i].get();
    }
  }

  std::vector<double> acc, kappa, f1;
  for (const auto& r : out.folds) {
    acc.push_back(r.accuracy);
    kappa.push_back(r.qwk);
    f1.push_back(r.macro_f1);
  }
  out.accuracy = summarize(acc);
  out.qwk = summarize(kappa);
  out.macro_f1 = summarize(f1);
  return out;
}

}  // namespace satomil

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

#include "json.hpp"
#include "satomil/datagen.hpp"
#include "satomil/metrics.hpp"
#include "satomil/model.hpp"

namespace satomil {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 300;
  std::size_t batch_size = 32;
  /// Epochs without validation improvement tolerated before stopping.
  int patience = 50;
  std::uint64_t seed = 0;
  ModelKind objective = ModelKind::Sat;

  void validate() const;

  /// lr 3e-6, 1500 epochs, batch 32, patience 100: the hyperparameters used
  /// when fine-tuning a pretrained image backbone on LIMUC.
  static TrainConfig paper_limuc();
};

nlohmann::json to_json(const TrainConfig& c);

struct AdamState {
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;
  long long step = 0;
};

AdamState make_adam_state(const ad::ParamList& params);

/// One bias-corrected Adam update from the gradients currently held in
/// `params`. Throws NumericError naming the first non-finite gradient.
void adam_step(const ad::ParamList& params, AdamState& state, const TrainConfig& config);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // summed loss divided by the number of bags
  double val_accuracy = 0.0;
  double val_qwk = 0.0;
  double val_macro_f1 = 0.0;
};

nlohmann::json to_json(const EpochRecord& r);
void write_history(std::ostream& out, const std::vector<EpochRecord>& history);
void write_history(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

struct TrainResult {
  std::unique_ptr<BagModel> model;  // holds the best-validation parameters
  std::vector<EpochRecord> history;
  double best_val_qwk = 0.0;
  int best_epoch = 0;
  /// Loss of the very first mini-batch divided by its bag count.
  double first_batch_loss_per_bag = 0.0;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

/// Oversamples `train_set`, then runs mini-batch Adam with the per-batch loss
/// summed over bags. Keeps the parameters of the best validation QWK (ties
/// broken by lower validation loss) and stops after `patience` epochs without
/// improvement. Throws NumericError if the loss diverges.
TrainResult train(const Dataset& train_set, const Dataset& val_set, const SatConfig& model,
                  const TrainConfig& config, const ProgressFn& progress = {});

struct TrainValSplit {
  Dataset train;
  Dataset validation;
};

/// Stratified 80/20 split (fold 0 of a seeded 5-fold split).
TrainValSplit validation_split(const Dataset& data, std::uint64_t seed);

/// Carves validation_split(data, config.seed) out of `data` and trains.
TrainResult train_with_validation_split(const Dataset& data, const SatConfig& model,
                                        const TrainConfig& config, const ProgressFn& progress = {});

metrics::MetricsReport evaluate(const BagModel& model, const Dataset& data);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct CvResult {
  std::vector<metrics::MetricsReport> folds;
  MetricSummary accuracy;
  MetricSummary qwk;
  MetricSummary macro_f1;
};

nlohmann::json to_json(const CvResult& r);

/// Stratified k-fold evaluation. Each fold trains with its own seed on an
/// internal 80/20 split of the fold's training part; oversampling only ever
/// touches that training part. `workers` > 1 runs folds concurrently.
CvResult cross_validate(const Dataset& data, std::size_t folds, const SatConfig& model,
                        const TrainConfig& config, unsigned workers = 1,
                        const std::function<void(std::size_t, const EpochRecord&)>& progress = {});

}  // namespace satomil

#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "satomil/sat_model.hpp"

namespace satomil::metrics {

/// K x K counts, rows = true class, cols = predicted class (both 1-based in the API).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k_classes);
  ConfusionMatrix(int k_classes, std::vector<long long> counts);

  int k() const noexcept { return k_; }
  long long at(int truth, int pred) const;
  void add(int truth, int pred, long long n = 1);
  long long total() const noexcept;
  const std::vector<long long>& counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int k_;
  std::vector<long long> counts_;
};

ConfusionMatrix confusion(std::span<const int> truths, std::span<const int> preds, int k_classes);

struct AccuracyF1 {
  double accuracy;
  double macro_f1;
};

/// Per-class F1 is 0 when a class has neither true nor predicted samples.
AccuracyF1 accuracy_macro_f1(const ConfusionMatrix& cm);

/// Quadratic weighted kappa; 1 when both weighted sums vanish.
double qwk(const ConfusionMatrix& cm);

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double qwk = 0.0;
  ConfusionMatrix confusion{2};
  std::size_t n_bags = 0;
};

MetricsReport report(const ConfusionMatrix& cm);
nlohmann::json to_json(const MetricsReport& r);

// ---- attention selectivity ----------------------------------------------

struct TokenSelectivity {
  int token = 1;              // k
  double mean_above = 0.0;    // mean weight on instances with label > k
  double mean_at_or_below = 0.0;
  std::size_t n_above = 0;
  std::size_t n_at_or_below = 0;
};

/// One (bag, token, instance) weight, for external plotting.
struct AttentionSample {
  std::string bag_id;
  int token;
  int instance_label;
  double weight;
};

struct SelectivityReport {
  std::vector<TokenSelectivity> tokens;
  std::vector<AttentionSample> samples;
};

/// `labels[i]` are the instance labels for `records[i]`. A group with no
/// members reports a mean of NaN.
SelectivityReport attention_selectivity(std::span<const AttentionRecord> records,
                                        std::span<const std::vector<int>> labels);

nlohmann::json to_json(const SelectivityReport& r, bool include_samples = false);

}  // namespace satomil::metrics

#include "satomil/metrics.hpp"

#include <cmath>
#include <limits>

#include "satomil/error.hpp"

namespace satomil::metrics {

ConfusionMatrix::ConfusionMatrix(int k_classes)
    : k_(k_classes), counts_(static_cast<std::size_t>(k_classes * k_classes), 0) {
  if (k_classes < 2) throw ContractError("confusion matrix needs K >= 2");
}

ConfusionMatrix::ConfusionMatrix(int k_classes, std::vector<long long> counts)
    : k_(k_classes), counts_(std::move(counts)) {
  if (k_classes < 2) throw ContractError("confusion matrix needs K >= 2");
  if (counts_.size() != static_cast<std::size_t>(k_ * k_)) {
    throw DimensionError("confusion matrix needs K*K counts");
  }
  for (long long c : counts_) {
    if (c < 0) throw ContractError("confusion counts must be nonnegative");
  }
}

long long ConfusionMatrix::at(int truth, int pred) const {
  return counts_[static_cast<std::size_t>((truth - 1) * k_ + (pred - 1))];
}

void ConfusionMatrix::add(int truth, int pred, long long n) {
  if (truth < 1 || truth > k_ || pred < 1 || pred > k_) {
    throw ContractError("confusion: class (" + std::to_string(truth) + ", " +
                        std::to_string(pred) + ") outside 1.." + std::to_string(k_));
  }
  counts_[static_cast<std::size_t>((truth - 1) * k_ + (pred - 1))] += n;
}

long long ConfusionMatrix::total() const noexcept {
  long long s = 0;
  for (long long c : counts_) s += c;
  return s;
}

ConfusionMatrix confusion(std::span<const int> truths, std::span<const int> preds, int k_classes) {
  if (truths.size() != preds.size()) {
    throw DimensionError("confusion: " + std::to_string(truths.size()) + " truths vs " +
                         std::to_string(preds.size()) + " predictions");
  }
  ConfusionMatrix cm(k_classes);
  for (std::size_t i = 0; i < truths.size(); ++i) cm.add(truths[i], preds[i]);
  return cm;
}

AccuracyF1 accuracy_macro_f1(const ConfusionMatrix& cm) {
  const long long n = cm.total();
  if (n == 0) throw ContractError("accuracy_macro_f1: empty confusion matrix");
  const int k = cm.k();
  long long trace = 0;
  double f1_sum = 0.0;
  for (int c = 1; c <= k; ++c) {
    const long long tp = cm.at(c, c);
    long long fp = 0, fn = 0;
    for (int o = 1; o <= k; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    trace += tp;
    const long long denom = 2 * tp + fp + fn;
    f1_sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return {static_cast<double>(trace) / static_cast<double>(n), f1_sum / k};
}

double qwk(const ConfusionMatrix& cm) {
  const long long total = cm.total();
  if (total == 0) throw ContractError("qwk: empty confusion matrix");
  const int k = cm.k();
  const double n = static_cast<double>(total);
  std::vector<double> row(static_cast<std::size_t>(k), 0.0), col(static_cast<std::size_t>(k), 0.0);
  for (int i = 1; i <= k; ++i) {
    for (int j = 1; j <= k; ++j) {
      row[static_cast<std::size_t>(i - 1)] += static_cast<double>(cm.at(i, j)) / n;
      col[static_cast<std::size_t>(j - 1)] += static_cast<double>(cm.at(i, j)) / n;
    }
  }
  const double norm = static_cast<double>((k - 1) * (k - 1));
  double observed = 0.0, expected = 0.0;
  for (int i = 1; i <= k; ++i) {
    for (int j = 1; j <= k; ++j) {
      const double w = static_cast<double>((i - j) * (i - j)) / norm;
      observed += w * static_cast<double>(cm.at(i, j)) / n;
      expected += w * row[static_cast<std::size_t>(i - 1)] * col[static_cast<std::size_t>(j - 1)];
    }
  }
  if (observed == 0.0 && expected == 0.0) return 1.0;
  return 1.0 - observed / expected;
}

MetricsReport report(const ConfusionMatrix& cm) {
  const AccuracyF1 af = accuracy_macro_f1(cm);
  return {af.accuracy, af.macro_f1, qwk(cm), cm, static_cast<std::size_t>(cm.total())};
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 1; i <= r.confusion.k(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 1; j <= r.confusion.k(); ++j) row.push_back(r.confusion.at(i, j));
    rows.push_back(std::move(row));
  }
  return {{"accuracy", r.accuracy},
          {"macro_f1", r.macro_f1},
          {"qwk", r.qwk},
          {"n_bags", r.n_bags},
          {"confusion", std::move(rows)}};
}

SelectivityReport attention_selectivity(std::span<const AttentionRecord> records,
                                        std::span<const std::vector<int>> labels) {
  if (records.size() != labels.size()) {
    throw DimensionError("attention_selectivity: records and label lists differ in length");
  }
  SelectivityReport out;
  std::size_t labeled = 0;
  for (std::size_t r = 0; r < records.size(); ++r) {
    const AttentionRecord& rec = records[r];
    const std::vector<int>& y = labels[r];
    if (y.size() != rec.instance_weights.cols()) {
      throw DimensionError("attention_selectivity: bag '" + rec.bag_id +
                           "' has mismatched instance labels");
    }
    labeled += y.size();
    const std::size_t tokens = rec.instance_weights.rows();
    if (out.tokens.size() < tokens) {
      for (std::size_t k = out.tokens.size(); k < tokens; ++k) {
        out.tokens.push_back({static_cast<int>(k + 1), 0.0, 0.0, 0, 0});
      }
    }
    for (std::size_t k = 0; k < tokens; ++k) {
      TokenSelectivity& t = out.tokens[k];
      for (std::size_t j = 0; j < y.size(); ++j) {
        const double w = rec.instance_weights(k, j);
        if (y[j] > t.token) {
          t.mean_above += w;
          ++t.n_above;
        } else {
          t.mean_at_or_below += w;
          ++t.n_at_or_below;
        }
        out.samples.push_back({rec.bag_id, t.token, y[j], w});
      }
    }
  }
  if (labeled == 0) throw ContractError("attention_selectivity: no labeled instances");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (TokenSelectivity& t : out.tokens) {
    t.mean_above = t.n_above ? t.mean_above / static_cast<double>(t.n_above) : nan;
    t.mean_at_or_below =
        t.n_at_or_below ? t.mean_at_or_below / static_cast<double>(t.n_at_or_below) : nan;
  }
  return out;
}

nlohmann::json to_json(const SelectivityReport& r, bool include_samples) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : r.tokens) {
    tokens.push_back({{"token", t.token},
                      {"mean_above", num(t.mean_above)},
                      {"mean_at_or_below", num(t.mean_at_or_below)},
                      {"n_above", t.n_above},
                      {"n_at_or_below", t.n_at_or_below}});
  }
  nlohmann::json j = {{"tokens", std::move(tokens)}};
  if (include_samples) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : r.samples) {
      samples.push_back({{"bag_id", s.bag_id},
                         {"token", s.token},
                         {"instance_label", s.instance_label},
                         {"weight", s.weight}});
    }
    j["samples"] = std::move(samples);
  }
  return j;
}

}  // namespace satomil::metrics

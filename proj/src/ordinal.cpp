#include "satomil/ordinal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "satomil/error.hpp"

namespace satomil::ordinal {

namespace {

double fused_bce(double z, double o) {
  return std::max(z, 0.0) - z * o + std::log1p(std::exp(-std::abs(z)));
}

double stable_sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

KRankTarget encode(int label, int k_classes) {
  if (k_classes < 2) throw ContractError("encode: K must be at least 2");
  if (label < 1 || label > k_classes) {
    throw ContractError("encode: label " + std::to_string(label) + " outside 1.." +
                        std::to_string(k_classes));
  }
  KRankTarget t{k_classes, std::vector<double>(static_cast<std::size_t>(k_classes - 1), 0.0)};
  for (int k = 1; k < k_classes; ++k) t.bits[static_cast<std::size_t>(k - 1)] = label > k ? 1.0 : 0.0;
  return t;
}

int decode(const RankProbabilities& p) {
  int y = 1;
  for (double v : p.probs) y += v > 0.5 ? 1 : 0;
  return y;
}

int decode_logits(std::span<const double> logits) {
  // sigmoid(z) > 0.5 <=> z > 0
  int y = 1;
  for (double z : logits) y += z > 0.0 ? 1 : 0;
  return y;
}

RankProbabilities probabilities(std::span<const double> logits) {
  RankProbabilities p{static_cast<int>(logits.size()) + 1, {}};
  p.probs.reserve(logits.size());
  for (double z : logits) p.probs.push_back(stable_sigmoid(z));
  return p;
}

ad::Var rank_bce_loss(ad::Var logits, std::span<const KRankTarget> targets) {
  const ad::Tensor& z = logits.value();
  if (z.rows() != targets.size()) {
    throw DimensionError("rank_bce_loss: " + std::to_string(z.rows()) + " logit rows for " +
                         std::to_string(targets.size()) + " targets");
  }
  ad::Tensor bits(z.rows(), z.cols());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].bits.size() != z.cols()) {
      throw DimensionError("rank_bce_loss: target has " + std::to_string(targets[i].bits.size()) +
                           " bits, logits have " + std::to_string(z.cols()));
    }
    for (std::size_t k = 0; k < z.cols(); ++k) bits(i, k) = targets[i].bits[k];
  }

  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += fused_bce(z[i], bits[i]);

  const std::size_t iz = logits.id();
  return logits.tape()->record(
      ad::Tensor(1, 1, total), {iz}, [iz, bits = std::move(bits)](ad::Tape& tp, std::size_t self) {
        const double g = tp.grad(self)[0];
        const ad::Tensor& zv = tp.value(iz);
        ad::Tensor& gz = tp.grad_buffer(iz);
        for (std::size_t i = 0; i < gz.size(); ++i) gz[i] += g * (stable_sigmoid(zv[i]) - bits[i]);
      });
}

double rank_bce_value(std::span<const double> logits, const KRankTarget& target) {
  if (logits.size() != target.bits.size()) throw DimensionError("rank_bce_value: length mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) total += fused_bce(logits[k], target.bits[k]);
  return total;
}

double rank_bce_from_probabilities(const RankProbabilities& p, const KRankTarget& target) {
  if (p.probs.size() != target.bits.size()) {
    throw DimensionError("rank_bce_from_probabilities: length mismatch");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < p.probs.size(); ++k) {
    const double o = target.bits[k], q = p.probs[k];
    if (o > 0.0) total -= o * std::log(q);
    if (o < 1.0) total -= (1.0 - o) * std::log1p(-q);
  }
  return total;
}

}  // namespace satomil::ordinal

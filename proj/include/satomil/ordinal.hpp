#pragma once

// K-rank ordinal codec: class Y in 1..K <-> K-1 bits O_k = 1{Y > k}.

#include <span>
#include <vector>

#include "satomil/autodiff.hpp"

namespace satomil::ordinal {

struct KRankTarget {
  int k_classes = 2;
  std::vector<double> bits;  // 0.0 / 1.0, monotone non-increasing
};

struct RankProbabilities {
  int k_classes = 2;
  std::vector<double> probs;
};

KRankTarget encode(int label, int k_classes);

/// 1 + number of entries strictly above 0.5.
int decode(const RankProbabilities& p);
int decode_logits(std::span<const double> logits);

RankProbabilities probabilities(std::span<const double> logits);

/// Summed rank-wise BCE over every row of `logits` ([bags x (K-1)]), in the
/// fused form max(z,0) - z*O + log(1 + exp(-|z|)).
ad::Var rank_bce_loss(ad::Var logits, std::span<const KRankTarget> targets);

/// Plain evaluation of the same loss on logits; for reporting and tests.
double rank_bce_value(std::span<const double> logits, const KRankTarget& target);

/// BCE evaluated directly on probabilities with the 0*log(0) = 0 convention.
double rank_bce_from_probabilities(const RankProbabilities& p, const KRankTarget& target);

}  // namespace satomil::ordinal

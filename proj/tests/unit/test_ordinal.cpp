#include <cmath>
#include <random>

#include "doctest.h"
#include "satomil/error.hpp"
#include "satomil/ordinal.hpp"

using namespace satomil;
using namespace satomil::ordinal;

TEST_CASE("encode examples") {
  CHECK(encode(3, 4).bits == std::vector<double>{1, 1, 0});
  CHECK(encode(1, 4).bits == std::vector<double>{0, 0, 0});
  CHECK(encode(2, 2).bits == std::vector<double>{1});
  CHECK_THROWS_AS(encode(0, 4), ContractError);
  CHECK_THROWS_AS(encode(5, 4), ContractError);
  CHECK_THROWS_AS(encode(1, 1), ContractError);
}

TEST_CASE("encode bits are a prefix of ones with Y-1 ones") {
  for (int k = 2; k <= 10; ++k) {
    for (int y = 1; y <= k; ++y) {
      const auto bits = encode(y, k).bits;
      int ones = 0;
      for (std::size_t i = 0; i < bits.size(); ++i) {
        ones += bits[i] == 1.0;
        if (i > 0) CHECK(bits[i] <= bits[i - 1]);
      }
      CHECK(ones == y - 1);
    }
  }
}

TEST_CASE("decode examples") {
  CHECK(decode({4, {0.9, 0.7, 0.2}}) == 3);
  CHECK(decode({4, {0.1, 0.2, 0.3}}) == 1);
  CHECK(decode({4, {0.6, 0.4, 0.9}}) == 3);
  // exactly 0.5 is not counted
  CHECK(decode({3, {0.5, 0.5}}) == 1);
  CHECK(decode_logits(std::vector<double>{4, 4, -4}) == 3);
  CHECK(decode_logits(std::vector<double>{0, 0, 0}) == 1);
}

TEST_CASE("decode inverts encode and stays in range") {
  for (int k = 2; k <= 10; ++k)
    for (int y = 1; y <= k; ++y) CHECK(decode({k, encode(y, k).bits}) == y);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const int k = 2 + static_cast<int>(rng() % 9);
    RankProbabilities p{k, std::vector<double>(static_cast<std::size_t>(k - 1))};
    for (double& v : p.probs) v = u(rng);
    const int y = decode(p);
    CHECK(y >= 1);
    CHECK(y <= k);
  }
}

TEST_CASE("rank BCE examples") {
  CHECK(rank_bce_from_probabilities({4, {1, 0, 0}}, encode(2, 4)) == 0.0);
  CHECK(rank_bce_from_probabilities({4, {0.5, 0.5, 0.5}}, encode(3, 4)) ==
        doctest::Approx(3 * std::log(2.0)).epsilon(1e-15));
  // -(ln .9 + ln .8 + ln .9)
  const double hand = -(std::log(0.9) + std::log(0.8) + std::log(0.9));
  CHECK(hand == doctest::Approx(0.43386).epsilon(1e-5));
  CHECK(rank_bce_from_probabilities({4, {0.9, 0.8, 0.1}}, encode(3, 4)) ==
        doctest::Approx(hand).epsilon(1e-14));

  // logit route agrees with the probability route
  const std::vector<double> logits = {std::log(9.0), std::log(4.0), -std::log(9.0)};
  CHECK(rank_bce_value(logits, encode(3, 4)) == doctest::Approx(hand).epsilon(1e-13));
  CHECK(rank_bce_value(std::vector<double>{0, 0, 0}, encode(1, 4)) ==
        doctest::Approx(3 * std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(rank_bce_value(std::vector<double>{0, 0}, encode(1, 4)), DimensionError);
}

TEST_CASE("rank BCE on a tape sums over bags and differentiates") {
  ad::Tape t;
  const ad::Var z = t.input(ad::Tensor::from_rows({{0.3, -1.0, 2.0}, {-0.4, 0.1, 0.0}}));
  const std::vector<KRankTarget> targets = {encode(2, 4), encode(4, 4)};
  const ad::Var loss = rank_bce_loss(z, targets);
  const double expect = rank_bce_value(z.value().row_span(0), targets[0]) +
                        rank_bce_value(z.value().row_span(1), targets[1]);
  CHECK(loss.value()[0] == doctest::Approx(expect).epsilon(1e-15));
  t.backward(loss);
  // d/dz = sigmoid(z) - O
  CHECK(z.grad()(0, 0) == doctest::Approx(1 / (1 + std::exp(-0.3)) - 1.0));
  CHECK(z.grad()(1, 2) == doctest::Approx(0.5 - 1.0));

  ad::Parameter p("z", ad::Tensor::from_rows({{0.2, -0.7, 1.3}}));
  const double err = ad::grad_check(
      [&](ad::Tape& tp) {
        const KRankTarget tgt = encode(3, 4);
        return rank_bce_loss(tp.param(p), std::span(&tgt, 1));
      },
      {&p});
  CHECK(err < 1e-8);

  CHECK_THROWS_AS(rank_bce_loss(z, std::span(targets).first(1)), DimensionError);
}

TEST_CASE("loss grows with ordinal distance for hard predictions") {
  const int k = 4;
  for (int pred = 1; pred <= k; ++pred) {
    std::vector<double> logits;
    for (int r = 1; r < k; ++r) logits.push_back(pred > r ? 6.0 : -6.0);
    for (int y1 = 1; y1 <= k; ++y1) {
      for (int y2 = 1; y2 <= k; ++y2) {
        if (std::abs(y1 - pred) < std::abs(y2 - pred)) {
          CHECK(rank_bce_value(logits, encode(y1, k)) < rank_bce_value(logits, encode(y2, k)));
        }
      }
    }
  }
}

#include <cmath>
#include <random>

#include "doctest.h"
#include "satomil/error.hpp"
#include "satomil/metrics.hpp"

using namespace satomil;
using namespace satomil::metrics;

namespace {

// Independent QWK straight from the textbook definition, on raw counts with
// expected counts row_i * col_j / n.
double qwk_reference(const std::vector<std::vector<long long>>& o) {
  const std::size_t k = o.size();
  std::vector<double> rows(k, 0.0), cols(k, 0.0);
  double n = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      rows[i] += o[i][j];
      cols[j] += o[i][j];
      n += o[i][j];
    }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      const double w = double((i - j) * (i - j)) / double((k - 1) * (k - 1));
      num += w * o[i][j];
      den += w * rows[i] * cols[j] / n;
    }
  if (num == 0.0 && den == 0.0) return 1.0;
  return 1.0 - num / den;
}

double macro_f1_reference(const std::vector<std::vector<long long>>& o) {
  const std::size_t k = o.size();
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = o[c][c], pred = 0.0, truth = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      pred += o[i][c];
      truth += o[c][i];
    }
    const double precision = pred > 0 ? tp / pred : 0.0;
    const double recall = truth > 0 ? tp / truth : 0.0;
    total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return total / k;
}

ConfusionMatrix to_cm(const std::vector<std::vector<long long>>& o) {
  std::vector<long long> flat;
  for (const auto& row : o) flat.insert(flat.end(), row.begin(), row.end());
  return ConfusionMatrix(static_cast<int>(o.size()), flat);
}

std::vector<std::vector<long long>> random_counts(std::mt19937_64& rng, std::size_t k) {
  std::uniform_int_distribution<long long> cell(0, 20);
  std::vector<std::vector<long long>> o(k, std::vector<long long>(k));
  for (auto& row : o)
    for (auto& v : row) v = cell(rng);
  o[0][0] += 1;
  return o;
}

}  // namespace

TEST_CASE("confusion examples") {
  const std::vector<int> t = {1, 2, 3};
  const ConfusionMatrix id = confusion(t, t, 3);
  for (int i = 1; i <= 3; ++i)
    for (int j = 1; j <= 3; ++j) CHECK(id.at(i, j) == (i == j ? 1 : 0));

  const ConfusionMatrix empty = confusion(std::vector<int>{}, std::vector<int>{}, 4);
  CHECK(empty.total() == 0);
  CHECK(empty == ConfusionMatrix(4));

  const std::vector<int> truth = {1, 1}, pred = {2, 2};
  CHECK(confusion(truth, pred, 3).at(1, 2) == 2);

  CHECK_THROWS_AS(confusion(std::vector<int>{1}, std::vector<int>{4}, 3), ContractError);
  CHECK_THROWS_AS(confusion(std::vector<int>{0}, std::vector<int>{1}, 3), ContractError);
  CHECK_THROWS_AS(confusion(std::vector<int>{1, 2}, std::vector<int>{1}, 3), DimensionError);
}

TEST_CASE("accuracy and macro-F1 examples") {
  const auto perfect = accuracy_macro_f1(to_cm({{3, 0, 0}, {0, 2, 0}, {0, 0, 5}}));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro_f1 == 1.0);

  const auto half = accuracy_macro_f1(to_cm({{1, 1}, {1, 1}}));
  CHECK(half.accuracy == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half.macro_f1 == doctest::Approx(0.5).epsilon(1e-15));

  const auto wrong = accuracy_macro_f1(to_cm({{0, 7, 0}, {0, 0, 0}, {0, 0, 0}}));
  CHECK(wrong.accuracy == 0.0);
  CHECK(wrong.macro_f1 == 0.0);

  // class 3 has no support and no predictions: F1 0, still averaged
  const auto missing = accuracy_macro_f1(to_cm({{2, 0, 0}, {0, 2, 0}, {0, 0, 0}}));
  CHECK(missing.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(accuracy_macro_f1(ConfusionMatrix(3)), ContractError);
}

TEST_CASE("qwk examples") {
  CHECK(qwk(to_cm({{4, 0, 0}, {0, 1, 0}, {0, 0, 2}})) == 1.0);
  // sum w*O = 1.0, sum w*E = 0.5
  CHECK(qwk(to_cm({{0, 1}, {1, 0}})) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(qwk_reference({{0, 1}, {1, 0}}) == doctest::Approx(-1.0).epsilon(1e-15));
  // everything in one cell: both sums vanish
  CHECK(qwk(to_cm({{0, 0}, {0, 5}})) == 1.0);
  CHECK_THROWS_AS(qwk(ConfusionMatrix(2)), ContractError);
}

TEST_CASE("metrics match brute-force references on random matrices") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    const auto o = random_counts(rng, k);
    const ConfusionMatrix cm = to_cm(o);
    CHECK(std::abs(qwk(cm) - qwk_reference(o)) <= 1e-12);
    CHECK(std::abs(accuracy_macro_f1(cm).macro_f1 - macro_f1_reference(o)) <= 1e-12);
    const double q = qwk(cm);
    CHECK(q >= -1.0 - 1e-12);
    CHECK(q <= 1.0 + 1e-12);
  }
}

TEST_CASE("qwk is invariant to scaling all counts") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng() % 5;
    auto o = random_counts(rng, k);
    const double base = qwk(to_cm(o));
    const long long s = 2 + static_cast<long long>(rng() % 9);
    for (auto& row : o)
      for (auto& v : row) v *= s;
    CHECK(std::abs(qwk(to_cm(o)) - base) <= 1e-12);
  }
}

TEST_CASE("qwk penalizes distant errors more") {
  // Moving a prediction also shifts the column marginals, so at chance-level
  // agreement kappa can rise; the property is about classifiers that agree
  // with the truth, hence diagonally dominant matrices.
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<long long> diag(30, 100), off(0, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 3 + rng() % 4;
    std::vector<std::vector<long long>> o(k, std::vector<long long>(k));
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) o[i][j] = i == j ? diag(rng) : off(rng);
    // move one bag of true class i from prediction i+1 to i+2
    const std::size_t i = rng() % (k - 2);
    if (o[i][i + 1] == 0) o[i][i + 1] = 1;
    const double before = qwk(to_cm(o));
    --o[i][i + 1];
    ++o[i][i + 2];
    CHECK(qwk(to_cm(o)) < before);
  }
}

TEST_CASE("report and json") {
  const MetricsReport r = report(to_cm({{3, 1}, {0, 4}}));
  CHECK(r.n_bags == 8);
  CHECK(r.accuracy == doctest::Approx(7.0 / 8.0));
  const auto j = to_json(r);
  CHECK(j.at("n_bags") == 8);
  CHECK(j.at("confusion") == nlohmann::json::array({{3, 1}, {0, 4}}));
  CHECK(j.at("qwk").get<double>() == r.qwk);
}

TEST_CASE("attention selectivity examples") {
  // uniform attention: both means equal
  AttentionRecord uniform{"u", ad::Tensor(3, 4, 0.25), ad::Tensor(3, 3)};
  const std::vector<std::vector<int>> labels_u = {{1, 2, 3, 4}};
  const auto ru = attention_selectivity(std::span(&uniform, 1), labels_u);
  REQUIRE(ru.tokens.size() == 3);
  for (const auto& t : ru.tokens) CHECK(t.mean_above == t.mean_at_or_below);
  CHECK(ru.samples.size() == 12);

  // token 3 puts all weight on the single label-4 instance
  AttentionRecord focused{"f", ad::Tensor(3, 3), ad::Tensor(3, 3)};
  focused.instance_weights(2, 1) = 1.0;
  const std::vector<std::vector<int>> labels_f = {{1, 4, 2}};
  const auto rf = attention_selectivity(std::span(&focused, 1), labels_f);
  CHECK(rf.tokens[2].token == 3);
  CHECK(rf.tokens[2].mean_above == 1.0);
  CHECK(rf.tokens[2].mean_at_or_below == 0.0);
  CHECK(rf.tokens[2].n_above == 1);
  CHECK(rf.tokens[2].n_at_or_below == 2);

  // pooled over bags
  const std::vector<AttentionRecord> both = {uniform, focused};
  const std::vector<std::vector<int>> labels_b = {{1, 2, 3, 4}, {1, 4, 2}};
  const auto rb = attention_selectivity(both, labels_b);
  CHECK(rb.tokens[2].n_above == 2);
  CHECK(rb.tokens[2].mean_above == doctest::Approx((0.25 + 1.0) / 2));
  CHECK(rb.tokens[2].mean_at_or_below == doctest::Approx((0.25 * 3 + 0.0) / 5));

  // empty group reported as NaN
  const std::vector<std::vector<int>> all_low = {{1, 1, 1, 1}};
  CHECK(std::isnan(attention_selectivity(std::span(&uniform, 1), all_low).tokens[0].mean_above));

  const std::vector<std::vector<int>> none;
  CHECK_THROWS(attention_selectivity({}, none));
  const std::vector<std::vector<int>> short_labels = {{1, 2}};
  CHECK_THROWS(attention_selectivity(std::span(&uniform, 1), short_labels));
}

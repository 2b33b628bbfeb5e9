#include <gtest/gtest.h>

#include "support.hpp"

using namespace llmaudit;
using namespace testsupport;

namespace {

std::vector<std::size_t> first_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

RandomizationOptions exact_options() {
  RandomizationOptions o;
  o.exact = true;
  return o;
}

std::vector<double> column(const Dataset& d, std::size_t f, const std::vector<std::size_t>& rows) {
  std::vector<double> out;
  for (auto r : rows) out.push_back(d.rows[r][f].as_number());
  return out;
}

}  // namespace

// ----- feature randomization --------------------------------------------------

TEST(Randomization, ZeroWeightFeatureStaysAtZero) {
  const auto d = random_dataset(60, 3, 1);
  auto pred = synthetic_predictor(linear_model({0.05, 0.0, 0.03}, 0.5));
  const auto rows = first_rows(30);
  const auto res = feature_randomization_check(*pred, d, rows, single_background({0.1, 0.2, 0.3}), "x2", 9,
                                               exact_options());
  EXPECT_LE(res.mean_abs_before, 1e-9);
  EXPECT_LE(res.mean_abs_after, 1e-9);
  EXPECT_TRUE(res.ignored);
  EXPECT_TRUE(res.passed);
  EXPECT_EQ(res.instances, 30u);
}

TEST(Randomization, UsedFeatureLosesItsValueDependence) {
  const auto d = random_dataset(1000, 3, 2);
  auto pred = synthetic_predictor(linear_model({0.1, 0.02, -0.03}, 0.5), 4);
  const auto rows = first_rows(1000);
  const auto res = feature_randomization_check(*pred, d, rows, single_background({0, 0, 0}), "x1", 17,
                                               exact_options());
  ASSERT_TRUE(res.r_before && res.r_after);
  EXPECT_GT(*res.r_before, 0.99);
  // Additive model: after the shuffle phi tracks the shuffled value, so r_after
  // is the correlation between the column and its own permutation.
  const auto shuffled = shuffle_column(d, 0, 17);
  const auto expected_r = pearson(column(d, 0, rows), column(shuffled, 0, rows));
  EXPECT_NEAR(*res.r_after, *expected_r, 1e-9);
  EXPECT_LT(std::abs(*res.r_after), 0.1);
  EXPECT_FALSE(res.ignored);
  EXPECT_TRUE(res.passed);
  EXPECT_NEAR(res.mean_abs_before, res.mean_abs_after, 1e-12);  // same multiset of values
}

TEST(Randomization, ConstantPredictorGivesZeros) {
  const auto d = random_dataset(40, 3, 3);
  auto pred = synthetic_predictor(linear_model({0, 0, 0}, 0.3));
  const auto res =
      feature_randomization_check(*pred, d, first_rows(40), single_background({1, 1, 1}), "x3", 5, exact_options());
  EXPECT_EQ(res.mean_abs_before, 0.0);
  EXPECT_EQ(res.mean_abs_after, 0.0);
  EXPECT_FALSE(res.r_before);
  EXPECT_TRUE(res.passed);
}

TEST(Randomization, PermutationModeCountsAgainstRobustnessPhase) {
  const auto d = random_dataset(20, 3, 4);
  auto pred = synthetic_predictor(linear_model({0.1, 0.0, 0.0}, 0.5));
  RandomizationOptions o;
  o.explainer.max_evals = 24;
  feature_randomization_check(*pred, d, first_rows(10), single_background({0, 0, 0}), "x1", 1, o);
  EXPECT_GT(pred->ledger().phase(Phase::robustness), 0u);
  EXPECT_EQ(pred->ledger().phase(Phase::attribution), 0u);
}

TEST(Randomization, RejectsUnknownAndCategoricalFeatures) {
  auto d = random_dataset(10, 2, 5);
  d.schema.push_back({"home", FeatureKind::categorical, {}, {"OWN", "RENT"}, {}});
  for (auto& r : d.rows) r.push_back(Cell::category("OWN"));
  auto pred = synthetic_predictor(linear_model({0.1, 0.1}));
  std::vector<Cell> bg{Cell::number(0), Cell::number(0), Cell::category("OWN")};
  const auto background = BackgroundSet::from_rows({bg});
  EXPECT_THROW(feature_randomization_check(*pred, d, first_rows(5), background, "nope", 1), AuditError);
  EXPECT_THROW(feature_randomization_check(*pred, d, first_rows(5), background, "home", 1), AuditError);
}

TEST(ShuffleColumn, PermutesOnlyTheTargetColumn) {
  const auto d = random_dataset(50, 3, 6);
  const auto s = shuffle_column(d, 1, 3);
  auto before = column(d, 1, first_rows(50)), after = column(s, 1, first_rows(50));
  EXPECT_NE(before, after);
  std::sort(before.begin(), before.end());
  std::sort(after.begin(), after.end());
  EXPECT_EQ(before, after);
  for (std::size_t r = 0; r < 50; ++r) {
    EXPECT_EQ(s.rows[r][0], d.rows[r][0]);
    EXPECT_EQ(s.rows[r][2], d.rows[r][2]);
  }
  EXPECT_EQ(s.labels, d.labels);
}

// ----- serialization sensitivity --------------------------------------------

TEST(Sensitivity, OrderInvariantModelHasZeroDelta) {
  const auto d = random_dataset(30, 4, 7);
  auto pred = synthetic_predictor(linear_model({0.1, -0.05, 0.02, 0.0}, 0.5));
  const std::vector<SerializationVariant> variants{parse_variant("default"), parse_variant("order:1"),
                                                   parse_variant("anon"), parse_variant("order:5+delim:dash")};
  const auto rows = first_rows(30);
  const auto rep = serialization_sensitivity(*pred, d, rows, variants);
  EXPECT_EQ(rep.variants, (std::vector<std::string>{"default", "order:1", "anon", "order:5+delim:dash"}));
  ASSERT_EQ(rep.probabilities.size(), 4u);
  for (const auto& p : rep.probabilities) EXPECT_EQ(p.size(), 30u);
  ASSERT_EQ(rep.pairs.size(), 6u);
  for (const auto& pair : rep.pairs) {
    EXPECT_EQ(pair.compared, 30u);
    EXPECT_EQ(*pair.max_abs_delta, 0.0);
    EXPECT_FALSE(pair.kendall_tau);
  }
  EXPECT_EQ(rep.failed, 0u);
  EXPECT_EQ(pred->ledger().phase(Phase::robustness), 4u * 30u);
}

TEST(Sensitivity, OrderDependentBackendShowsDelta) {
  const auto d = random_dataset(12, 3, 8);
  // Answers 0.2 when x1 is listed before x2 and 0.7 otherwise.
  auto backend = std::make_unique<ScriptedBackend>([](const RenderedPrompt& p) -> Expected<std::string, BackendFailure> {
    const bool x1_first = p.text.find("\nx1: ") < p.text.find("\nx2: ");
    return std::string("{\"Estimated Default\": ") + (x1_first ? "0.2" : "0.7") + "}";
  });
  Predictor pred(synthetic_config(), std::move(backend));
  std::vector<SerializationVariant> variants{parse_variant("default")};
  // Find an order seed that places x2 ahead of x1.
  for (std::uint64_t seed = 1; variants.size() < 2; ++seed) {
    SerializationVariant v;
    v.order_seed = seed;
    const auto p = render_instance_prompt(d, 0, v);
    if (p.text.find("\nx2: ") < p.text.find("\nx1: ")) variants.push_back(v);
  }
  const auto rep = serialization_sensitivity(pred, d, first_rows(12), variants);
  ASSERT_EQ(rep.pairs.size(), 1u);
  EXPECT_NEAR(*rep.pairs[0].max_abs_delta, 0.5, 1e-15);
  EXPECT_GT(*rep.pairs[0].mean_abs_delta, 0.0);
}

TEST(Sensitivity, FailuresAreCountedAndExcludedFromPairs) {
  const auto d = random_dataset(5, 2, 9);
  auto backend = std::make_unique<ScriptedBackend>([](const RenderedPrompt& p) -> Expected<std::string, BackendFailure> {
    if (p.text.find("f_1") != std::string::npos) return BackendFailure{"refused"};
    return std::string("{\"Estimated Default\": 0.4}");
  });
  auto c = synthetic_config();
  c.max_retries = 0;
  Predictor pred(c, std::move(backend));
  const std::vector<SerializationVariant> variants{parse_variant("default"), parse_variant("anon")};
  const auto rep = serialization_sensitivity(pred, d, first_rows(5), variants);
  EXPECT_EQ(rep.failed, 5u);
  EXPECT_EQ(rep.pairs[0].compared, 0u);
  EXPECT_FALSE(rep.pairs[0].max_abs_delta);
  for (const auto& p : rep.probabilities[1]) EXPECT_FALSE(p);
}

TEST(Sensitivity, AttributionRankingsAgreeForInvariantModel) {
  const auto d = random_dataset(8, 4, 10);
  auto pred = synthetic_predictor(linear_model({0.2, -0.1, 0.05, 0.01}, 0.5));
  const auto bg = single_background({0, 0, 0, 0});
  SensitivityAttribution attr;
  attr.background = &bg;
  attr.explainer.max_evals = 40;
  const std::vector<SerializationVariant> variants{parse_variant("default"), parse_variant("anon+order:2")};
  const auto rep = serialization_sensitivity(*pred, d, first_rows(8), variants, attr);
  ASSERT_TRUE(rep.pairs[0].kendall_tau);
  EXPECT_EQ(*rep.pairs[0].kendall_tau, 1.0);
  EXPECT_EQ(pred->ledger().phase(Phase::attribution), 0u);
}

TEST(Sensitivity, NeedsTwoVariants) {
  const auto d = random_dataset(3, 2, 11);
  auto pred = synthetic_predictor(linear_model({0.1, 0.1}));
  const std::vector<SerializationVariant> one{parse_variant("default")};
  EXPECT_THROW(serialization_sensitivity(*pred, d, first_rows(3), one), AuditError);
}

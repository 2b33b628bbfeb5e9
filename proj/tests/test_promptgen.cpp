#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace llmaudit;
using namespace testsupport;

namespace {

Dataset two_feature_row() {
  Dataset d;
  d.task_description = "whether a borrower defaults";
  d.positive_class_name = "Default";
  d.task_name = "Borrower";
  d.schema = {{"a", FeatureKind::numeric, {}, {}, {}},
              {"b", FeatureKind::categorical, {}, {"OWN", "RENT"}, {}}};
  d.rows = {{Cell::number(1.5), Cell::category("RENT")}};
  d.labels = {0};
  return d;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

bool has_line(const std::string& text, const std::string& line) {
  const auto ls = lines_of(text);
  return std::find(ls.begin(), ls.end(), line) != ls.end();
}

// Lines between the "Details:" header and the blank line that follows.
std::vector<std::string> feature_lines(const std::string& text) {
  const auto ls = lines_of(text);
  std::vector<std::string> out;
  bool inside = false;
  for (const auto& l : ls) {
    if (inside && l.empty()) break;
    if (inside) out.push_back(l);
    if (l.size() > 8 && l.substr(l.size() - 8) == "Details:") inside = true;
  }
  return out;
}

}  // namespace

TEST(InstancePrompt, DefaultVariantLines) {
  const auto p = render_instance_prompt(two_feature_row(), 0);
  EXPECT_TRUE(has_line(p.text, "a: 1.5"));
  EXPECT_TRUE(has_line(p.text, "b: RENT"));
  EXPECT_EQ(p.variant, "default");
  EXPECT_TRUE(p.name_map.empty());
  const std::string expected =
      "Predict whether a borrower defaults. Use the features provided below to assess the likelihood of Default.\n"
      "\n"
      "Borrower Details:\n"
      "a: 1.5\n"
      "b: RENT\n"
      "\n"
      "Provide your estimated probability of the Default.\n"
      "Do NOT perform coding or calculations, just provide the probability.\n"
      "\n"
      "Your answer should only contain the probability estimate in JSON:\n"
      "{\n"
      "  \"Estimated Default\":\n"
      "  <float value between 0 and 1>\n"
      "}\n";
  EXPECT_EQ(p.text, expected);
}

TEST(InstancePrompt, AnonymizedNamesAndMap) {
  SerializationVariant v;
  v.anonymize = true;
  const auto p = render_instance_prompt(two_feature_row(), 0, v);
  EXPECT_TRUE(has_line(p.text, "f_1: 1.5"));
  EXPECT_TRUE(has_line(p.text, "f_2: RENT"));
  EXPECT_EQ(p.name_map, (std::vector<std::pair<std::string, std::string>>{{"a", "f_1"}, {"b", "f_2"}}));
  EXPECT_EQ(p.text.find("a: "), std::string::npos);
}

TEST(InstancePrompt, MaskReplacesOnlyTheMaskedFeature) {
  std::vector<std::optional<Cell>> mask(2);
  mask[0] = Cell::number(0.0);
  const auto p = render_instance_prompt(two_feature_row(), 0, {}, mask);
  EXPECT_TRUE(has_line(p.text, "a: 0"));
  EXPECT_TRUE(has_line(p.text, "b: RENT"));
  std::vector<std::optional<Cell>> wrong(2);
  wrong[0] = Cell::category("RENT");
  EXPECT_THROW(render_instance_prompt(two_feature_row(), 0, {}, wrong), AuditError);
}

TEST(InstancePrompt, MissingRendersUnknownAndDelimitersApply) {
  auto d = two_feature_row();
  d.rows[0][0] = Cell{};
  SerializationVariant v;
  v.delimiter = Delimiter::equals;
  EXPECT_TRUE(has_line(render_instance_prompt(d, 0, v).text, "a = unknown"));
  v.delimiter = Delimiter::dash;
  EXPECT_TRUE(has_line(render_instance_prompt(d, 0, v).text, "b - RENT"));
}

TEST(InstancePrompt, PureAndOrderInvariantMultiset) {
  const auto d = random_dataset(20, 9, 3);
  for (std::size_t row = 0; row < d.row_count(); ++row) {
    const auto base = render_instance_prompt(d, row);
    EXPECT_EQ(base.text, render_instance_prompt(d, row).text);
    auto expected = feature_lines(base.text);
    ASSERT_EQ(expected.size(), d.feature_count());
    std::sort(expected.begin(), expected.end());
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SerializationVariant v;
      v.order_seed = seed;
      const auto p = render_instance_prompt(d, row, v);
      auto got = feature_lines(p.text);
      std::sort(got.begin(), got.end());
      EXPECT_EQ(got, expected);
      auto order = p.feature_order;
      std::sort(order.begin(), order.end());
      for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
    }
  }
}

TEST(InstancePrompt, NameMapInversionRestoresNames) {
  const auto d = random_dataset(3, 12, 9);
  SerializationVariant v;
  v.anonymize = true;
  v.order_seed = 4;
  const auto p = render_instance_prompt(d, 1, v);
  const auto anon_lines = feature_lines(p.text);
  const auto plain_lines = feature_lines(render_instance_prompt(d, 1, SerializationVariant{.order_seed = 4}).text);
  ASSERT_EQ(anon_lines.size(), plain_lines.size());
  std::set<std::string> aliases;
  for (std::size_t k = 0; k < anon_lines.size(); ++k) {
    const auto colon = anon_lines[k].find(": ");
    const auto alias = anon_lines[k].substr(0, colon);
    aliases.insert(alias);
    EXPECT_EQ(p.original_name(alias) + anon_lines[k].substr(colon), plain_lines[k]);
  }
  EXPECT_EQ(aliases.size(), d.feature_count());  // bijection
}

TEST(Variant, IdRoundTrip) {
  for (const char* id : {"default", "anon", "order:3", "order:7+anon+delim:equals", "delim:dash"})
    EXPECT_EQ(parse_variant(id).id(), id);
  EXPECT_THROW(parse_variant("shuffle"), AuditError);
  EXPECT_THROW(parse_variant("order:-1"), AuditError);
}

TEST(FeaturePrompt, PlainAndRationaleTemplates) {
  Dataset d = two_feature_row();
  d.schema.push_back({"Interest Rate", FeatureKind::numeric, {}, {}, {}});
  const auto plain = render_feature_prompt(d, 2, false);
  EXPECT_EQ(plain.kind, PromptKind::feature);
  EXPECT_NE(plain.text.find("Interest Rate"), std::string::npos);
  EXPECT_NE(plain.text.find("positive | neutral | negative"), std::string::npos);
  EXPECT_EQ(plain.text.find("\"Explanation\""), std::string::npos);
  const auto rich = render_feature_prompt(d, 2, true);
  EXPECT_EQ(rich.kind, PromptKind::feature_with_rationale);
  EXPECT_NE(rich.text.find("\"Feature impact\""), std::string::npos);
  EXPECT_NE(rich.text.find("\"Explanation\""), std::string::npos);
  EXPECT_EQ(rich.subject, "Interest Rate");
}

TEST(FeaturePrompt, AnonymizedAlias) {
  Dataset d = two_feature_row();
  d.schema.push_back({"Interest Rate", FeatureKind::numeric, {}, {}, {}});
  SerializationVariant v;
  v.anonymize = true;
  const auto p = render_feature_prompt(d, 2, false, v);
  EXPECT_NE(p.text.find("f_3"), std::string::npos);
  EXPECT_EQ(p.text.find("Interest Rate"), std::string::npos);
  EXPECT_EQ(p.original_name("f_3"), "Interest Rate");
  EXPECT_EQ(p.subject, "Interest Rate");
}

TEST(ParseProbability, Examples) {
  const auto a = parse_probability_response(R"({"Estimated Bankruptcy": 0.07})");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->value, 0.07);
  EXPECT_FALSE(a->clamped);

  const auto b = parse_probability_response("Sure, here you go:\n```json\n{\"Estimated Default\": 1.4}\n```\nHope it helps.");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->value, 1.0);
  EXPECT_TRUE(b->clamped);

  EXPECT_FALSE(parse_probability_response("I cannot answer"));
  EXPECT_FALSE(parse_probability_response(R"({"Probability": 0.3})"));
  EXPECT_FALSE(parse_probability_response(R"({"Estimated Default": "high"})"));
}

TEST(ParseProbability, NegativeClampsAndStrictMode) {
  const auto r = parse_probability_response(R"({"Estimated Default": -0.2})");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->value, 0.0);
  EXPECT_TRUE(r->clamped);
  EXPECT_TRUE(parse_probability_response(R"({"Estimated Default": "0.3",})"));
  EXPECT_FALSE(parse_probability_response(R"(answer: {"Estimated Default": 0.3})", true));
  EXPECT_TRUE(parse_probability_response(R"( {"Estimated Default": 0.3} )", true));
}

TEST(ParseImpact, Examples) {
  const auto a = parse_impact_response(R"({"Feature impact": "negative"})");
  ASSERT_TRUE(a);
  EXPECT_EQ(a->label, ImpactLabel::negative);
  EXPECT_FALSE(a->rationale);

  const auto b = parse_impact_response(R"({"Feature impact": "Positive", "Explanation": "higher profit lowers risk"})");
  ASSERT_TRUE(b);
  EXPECT_EQ(b->label, ImpactLabel::positive);
  EXPECT_EQ(b->rationale, "higher profit lowers risk");

  EXPECT_FALSE(parse_impact_response(R"({"Feature impact": "mixed"})"));
  EXPECT_FALSE(parse_impact_response("no idea"));
}

TEST(ParseImpact, TemplateCopiedWithoutQuotes) {
  const auto r = parse_impact_response("{\n  \"Feature impact\": neutral,\n}");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->label, ImpactLabel::neutral);
}

TEST(ParseRoundTrip, WellFormedResponsesForEveryVariant) {
  const auto d = random_dataset(5, 4, 6);
  Rng rng(12);
  for (const char* id : {"default", "anon", "order:2+delim:dash"}) {
    const auto v = parse_variant(id);
    const auto p = render_instance_prompt(d, 2, v);
    const double prob = uniform01(rng);
    const auto parsed = parse_probability_response("{\"Estimated " + d.positive_class_name + "\": " + text::exact(prob) + "}");
    ASSERT_TRUE(parsed) << p.variant;
    EXPECT_EQ(parsed->value, prob);
    for (auto label : {ImpactLabel::negative, ImpactLabel::neutral, ImpactLabel::positive}) {
      const auto r = parse_impact_response(std::string("{\"Feature impact\": \"") + to_string(label) + "\"}");
      ASSERT_TRUE(r);
      EXPECT_EQ(r->label, label);
    }
  }
}

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "support.hpp"

using namespace llmaudit;
using namespace testsupport;

namespace {

const std::string source_dir = LLMAUDIT_SOURCE_DIR;

// Small end-to-end configuration over the bundled loan demo table.
RunConfig demo_config(const TempDir& dir, const std::string& out, std::size_t parallelism) {
  RunConfig c;
  c.base_dir = source_dir + "/data/demo";
  c.dataset = "loan_demo.csv";
  c.schema = "../schemas/loan.schema";
  c.output_dir = dir.file(out);
  c.classify_n = 80;
  c.explain_n = 10;
  c.max_evals = 60;
  c.variants = {parse_variant("default"), parse_variant("anon")};
  c.sanity_check = true;
  c.sanity_features = {"Interest Rate"};
  c.robustness = true;
  c.robustness_rows = 5;
  c.predictor.kind = PredictorKind::synthetic;
  c.predictor.synthetic_model_path = "loan_synthetic.json";
  c.predictor.cache_path = dir.file("cache.jsonl");
  c.predictor.parallelism = parallelism;
  c.predictor.retry_backoff = std::chrono::milliseconds(0);
  return c;
}

std::map<std::string, std::string> read_bundle(const std::string& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      out[std::filesystem::relative(e.path(), dir).string()] = kv::read_text(e.path().string());
  return out;
}

}  // namespace

TEST(RunConfigText, FormatParseRoundTrip) {
  RunConfig c;
  c.dataset = "d.csv";
  c.schema = "s.schema";
  c.classify_n = 40;
  c.walk_mode = WalkMode::antithetic;
  c.plan_all_features = true;
  c.variants = {parse_variant("default"), parse_variant("order:3+anon"), parse_variant("delim:dash")};
  c.selfexpl_mode = SelfExplMode::rationale;
  c.baseline = {BaselineSource::Kind::import_file, "ext/shap.csv"};
  c.surrogate_learning_rate = 0.1;
  c.mean_sign_direction = true;
  c.sanity_features = {"Interest Rate", "Public Records"};
  c.predictor.kind = PredictorKind::replay;
  c.predictor.cache_path = "cache.jsonl";
  c.predictor.parallelism = 6;
  c.predictor.temperature = 0.25;
  const auto text = format_run_config(c);
  const auto back = parse_run_config(text);
  EXPECT_EQ(format_run_config(back), text);
  EXPECT_EQ(back.baseline.path, "ext/shap.csv");
  EXPECT_EQ(back.variants.size(), 3u);
  EXPECT_EQ(back.predictor.parallelism, 6u);
  EXPECT_EQ(text.find("output_dir"), std::string::npos);
}

TEST(RunConfigText, SetValueValidatesKeysAndValues) {
  RunConfig c;
  set_config_value(c, "explain_n", "30");
  EXPECT_EQ(c.explain_n, 30u);
  set_config_value(c, "classify_n", "all");
  EXPECT_FALSE(c.classify_n);
  set_config_value(c, "predictor.parallelism", "4");
  EXPECT_EQ(c.predictor.parallelism, 4u);
  EXPECT_THROW(set_config_value(c, "explain_count", "3"), AuditError);
  EXPECT_THROW(set_config_value(c, "stratified", "maybe"), AuditError);
  EXPECT_THROW(set_config_value(c, "walk_mode", "backward"), AuditError);
  EXPECT_THROW(set_config_value(c, "max_evals", "-5"), AuditError);
  EXPECT_THROW(set_config_value(c, "baseline", "kernel"), AuditError);
  EXPECT_THROW(parse_run_config("[model]\nkind = synthetic\n"), AuditError);
}

TEST(RunConfigText, RelativePathsResolveAgainstConfigDirectory) {
  TempDir dir;
  std::filesystem::create_directories(dir.path() / "cfg");
  write_text(dir.file("cfg/run.cfg"), "dataset = ../data/x.csv\nschema = /abs/x.schema\n");
  const auto c = load_run_config(dir.file("cfg/run.cfg"));
  EXPECT_EQ(c.resolve(c.dataset), (dir.path() / "data/x.csv").string());
  EXPECT_EQ(c.resolve(c.schema), "/abs/x.schema");
}

TEST(RunConfigText, ValidationNeedsDatasetAndVariants) {
  RunConfig c;
  EXPECT_THROW(c.validate(), AuditError);
  c.dataset = "d.csv";
  c.schema = "s.schema";
  c.predictor.kind = PredictorKind::synthetic;
  c.predictor.synthetic_model_path = "m.json";
  c.robustness = true;
  EXPECT_THROW(c.validate(), AuditError);
  c.variants.push_back(parse_variant("anon"));
  EXPECT_NO_THROW(c.validate());
}

TEST(Plan, LoanDefaultsOverEveryFeature) {
  TempDir dir;
  auto c = demo_config(dir, "out", 1);
  c.explain_n = 250;
  c.max_evals = 200;
  c.plan_all_features = true;
  std::ostringstream log;
  const auto p = cmd_plan(c, log);
  EXPECT_EQ(p.features, 21u);
  EXPECT_EQ(p.permutations, 4u);
  EXPECT_EQ(p.per_instance_calls, 440u);
  EXPECT_EQ(p.total_calls, 110000u);
  EXPECT_NE(log.str().find("110000 total"), std::string::npos);
  const auto j = nlohmann::json::parse(kv::read_text(dir.file("out/plan.json")));
  EXPECT_EQ(j["total_calls"], 110000);
  EXPECT_EQ(j["features_counted"], "all");
  EXPECT_TRUE(std::filesystem::exists(dir.file("out/config.resolved.txt")));
}

TEST(Plan, ExplainedFeaturesOnlyByDefault) {
  TempDir dir;
  auto c = demo_config(dir, "out", 1);
  c.explain_n = 250;
  c.max_evals = 200;
  std::ostringstream log;
  const auto p = cmd_plan(c, log);
  EXPECT_EQ(p.features, 12u);
  EXPECT_EQ(p.permutations, 8u);
  EXPECT_EQ(p.per_instance_calls, 8u * 13u * 5u);
}

TEST(Plan, RefusesBudgetBelowOnePermutation) {
  TempDir dir;
  auto c = demo_config(dir, "out", 1);
  c.plan_all_features = true;
  c.max_evals = 41;
  std::ostringstream log;
  try {
    cmd_plan(c, log);
    FAIL() << "expected refusal";
  } catch (const AuditError& e) {
    EXPECT_NE(std::string(e.what()).find("42"), std::string::npos) << e.what();
  }
}

TEST(Audit, MissingUpstreamArtifactIsNamed) {
  TempDir dir;
  const auto c = demo_config(dir, "empty", 1);
  std::ostringstream log;
  try {
    cmd_audit(c, log);
    FAIL() << "expected a missing-artifact error";
  } catch (const AuditError& e) {
    EXPECT_NE(std::string(e.what()).find("missing upstream artifact"), std::string::npos) << e.what();
  }
}

TEST(Classify, PredictionsFileMatchesReport) {
  TempDir dir;
  const auto c = demo_config(dir, "out", 2);
  std::ostringstream log;
  const auto report = cmd_classify(c, log);
  const auto scored = read_predictions(dir.file("out/predictions.csv"));
  EXPECT_EQ(scored.scores.size(), 80u);
  EXPECT_EQ(report.n_scored, 80u);
  EXPECT_EQ(*roc_auc(scored.scores, scored.labels), *report.roc_auc);
  const auto ledger = nlohmann::json::parse(kv::read_text(dir.file("out/ledger.json")));
  EXPECT_EQ(ledger["classify"]["per_phase"]["classification"], 80);
  write_text(dir.file("bad.csv"), "row,score\n");
  EXPECT_THROW(read_predictions(dir.file("bad.csv")), AuditError);
}

TEST(RunAll, WarmCacheBundlesAreByteIdentical) {
  TempDir dir;
  std::ostringstream log;
  cmd_run_all(demo_config(dir, "cold", 1), log);
  const auto cache_after_cold = kv::read_text(dir.file("cache.jsonl"));

  cmd_run_all(demo_config(dir, "warm1a", 1), log);
  cmd_run_all(demo_config(dir, "warm1b", 1), log);
  cmd_run_all(demo_config(dir, "warm8a", 8), log);
  cmd_run_all(demo_config(dir, "warm8b", 8), log);
  EXPECT_EQ(kv::read_text(dir.file("cache.jsonl")), cache_after_cold);

  const auto a1 = read_bundle(dir.file("warm1a")), b1 = read_bundle(dir.file("warm1b"));
  const auto a8 = read_bundle(dir.file("warm8a")), b8 = read_bundle(dir.file("warm8b"));
  EXPECT_EQ(a1, b1);
  EXPECT_EQ(a8, b8);
  ASSERT_EQ(a1.size(), a8.size());
  for (const auto& [name, content] : a1) {
    if (name == "config.resolved.txt") continue;  // records the parallelism setting
    EXPECT_EQ(a8.at(name), content) << name;
  }
  for (const char* name : {"report.json", "shap.csv", "agreement.csv", "sanity.csv", "robustness.csv", "ledger.json"})
    EXPECT_TRUE(a1.count(name)) << name;

  // The warm runs were served from the cache alone.
  const auto ledger = nlohmann::json::parse(a1.at("ledger.json"));
  for (const auto& [command, section] : ledger.items()) EXPECT_EQ(section["model_calls"], 0) << command;
}

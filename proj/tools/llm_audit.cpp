// llm_audit: staged audit of a black-box tabular classifier.
//
//   llm_audit plan        --config run.cfg
//   llm_audit classify    --config run.cfg --set predictor.parallelism=8
//   llm_audit explain     --config run.cfg
//   llm_audit selfexplain --config run.cfg
//   llm_audit audit       --config run.cfg
//   llm_audit run-all     --config run.cfg -o out/

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "llmaudit.hpp"

namespace {

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::size_t parallelism = 0;
  std::string cache_path;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config_path, "run configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "override a config field, key=value (repeatable)");
  cmd->add_option("-o,--output-dir", o.output_dir, "output directory");
  cmd->add_option("-j,--parallelism", o.parallelism, "concurrent model requests");
  cmd->add_option("--cache", o.cache_path, "response cache file");
}

llmaudit::RunConfig resolve(const CommonOptions& o) {
  auto cfg = llmaudit::load_run_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw llmaudit::AuditError("--set expects key=value, got '" + kv + "'");
    const std::string key(llmaudit::text::trim(kv.substr(0, eq)));
    std::string value(llmaudit::text::trim(kv.substr(eq + 1)));
    // Command-line paths are relative to the working directory.
    static const std::vector<std::string> path_keys{"dataset", "schema", "predictor.cache_path",
                                                    "predictor.synthetic_model", "instance_template",
                                                    "feature_template", "rationale_template"};
    if (!value.empty() && std::find(path_keys.begin(), path_keys.end(), key) != path_keys.end())
      value = std::filesystem::absolute(value).string();
    llmaudit::set_config_value(cfg, key, value);
  }
  if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
  else cfg.output_dir = cfg.resolve(cfg.output_dir);
  if (o.parallelism) cfg.predictor.parallelism = o.parallelism;
  if (!o.cache_path.empty()) cfg.predictor.cache_path = std::filesystem::absolute(o.cache_path).string();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit a black-box probabilistic tabular classifier: attributions, self-explanations, agreement"};
  app.require_subcommand(1);

  CommonOptions opts;
  auto* plan = app.add_subcommand("plan", "print and persist the call budget");
  auto* classify = app.add_subcommand("classify", "score instances and write classification quality");
  auto* explain = app.add_subcommand("explain", "permutation attributions for the sampled instances");
  auto* selfexplain = app.add_subcommand("selfexplain", "elicit per-feature impact claims");
  auto* audit = app.add_subcommand("audit", "assemble agreement, alignment and checks into a report");
  auto* run_all = app.add_subcommand("run-all", "plan, classify, explain, selfexplain, audit");
  for (auto* cmd : {plan, classify, explain, selfexplain, audit, run_all}) add_common(cmd, opts);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = resolve(opts);
    if (plan->parsed()) llmaudit::cmd_plan(cfg, std::cout);
    else if (classify->parsed()) llmaudit::cmd_classify(cfg, std::cout);
    else if (explain->parsed()) llmaudit::cmd_explain(cfg, std::cout);
    else if (selfexplain->parsed()) llmaudit::cmd_selfexplain(cfg, std::cout);
    else if (audit->parsed()) llmaudit::cmd_audit(cfg, std::cout);
    else if (run_all->parsed()) llmaudit::cmd_run_all(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "llm_audit: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

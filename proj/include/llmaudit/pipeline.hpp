#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmaudit/attribution.hpp"
#include "llmaudit/baseline.hpp"
#include "llmaudit/checks.hpp"
#include "llmaudit/config.hpp"
#include "llmaudit/csv.hpp"
#include "llmaudit/metrics.hpp"
#include "llmaudit/predictor.hpp"
#include "llmaudit/remote.hpp"
#include "llmaudit/selfexpl.hpp"
#include "llmaudit/shap_io.hpp"
#include "llmaudit/tabular.hpp"

namespace llmaudit {

// Bundle file names.
namespace bundle {
inline constexpr const char* plan = "plan.json";
inline constexpr const char* resolved_config = "config.resolved.txt";
inline constexpr const char* ledger = "ledger.json";
inline constexpr const char* predictions = "predictions.csv";
inline constexpr const char* classification = "classification.json";
inline constexpr const char* reliability = "reliability.csv";
inline constexpr const char* background = "background.csv";
inline constexpr const char* shap = "shap.csv";
inline constexpr const char* importance = "importance.csv";
inline constexpr const char* selfexpl_plain = "selfexpl_plain.csv";
inline constexpr const char* selfexpl_rationale = "selfexpl_rationale.csv";
inline constexpr const char* baseline_shap = "baseline_shap.csv";
inline constexpr const char* surrogate = "surrogate.json";
inline constexpr const char* agreement = "agreement.csv";
inline constexpr const char* per_rank = "per_rank.csv";
inline constexpr const char* alignment = "alignment.csv";
inline constexpr const char* sanity = "sanity.csv";
inline constexpr const char* robustness = "robustness.csv";
inline constexpr const char* report = "report.json";
}  // namespace bundle

namespace detail {

inline std::string out_path(const RunConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.output_dir);
  return (std::filesystem::path(c.output_dir) / name).string();
}

inline void write_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AuditError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::string optional_cell(const std::optional<double>& v) { return v ? text::exact(*v) : ""; }

inline std::string flag_cell(bool b) { return b ? "1" : "0"; }

inline void write_resolved_config(const RunConfig& c) {
  std::ofstream out(out_path(c, bundle::resolved_config), std::ios::binary | std::ios::trunc);
  out << format_run_config(c);
}

/// Replaces one command's section of ledger.json, keeping the others.
inline void record_ledger(const RunConfig& c, const std::string& command, const CallLedger& ledger) {
  const auto path = out_path(c, bundle::ledger);
  nlohmann::ordered_json all = nlohmann::ordered_json::object();
  if (std::filesystem::exists(path)) {
    auto existing = nlohmann::ordered_json::parse(kv::read_text(path), nullptr, false);
    if (existing.is_object()) all = std::move(existing);
  }
  all[command] = ledger.to_json();
  write_json(path, all);
}

inline std::string require_artifact(const RunConfig& c, const std::string& name, const std::string& producer) {
  const auto path = (std::filesystem::path(c.output_dir) / name).string();
  if (!std::filesystem::exists(path))
    throw AuditError("audit: missing upstream artifact '" + path + "' (run '" + producer + "' first)");
  return path;
}

/// File-name-safe form of a feature name.
inline std::string file_token(const std::string& name) {
  std::string out;
  for (unsigned char ch : name) out += std::isalnum(ch) || ch == '-' ? static_cast<char>(ch) : '_';
  return out.empty() ? "_" : out;
}

}  // namespace detail

inline Dataset load_run_dataset(const RunConfig& c) { return load_dataset(c.resolve(c.dataset), c.resolve(c.schema)); }

inline PromptTemplates run_templates(const RunConfig& c) {
  auto resolve = [&](const std::optional<std::string>& p) -> std::optional<std::string> {
    if (!p) return std::nullopt;
    return c.resolve(*p);
  };
  return load_templates(resolve(c.instance_template), resolve(c.feature_template), resolve(c.rationale_template));
}

inline std::unique_ptr<Predictor> run_predictor(const RunConfig& c) {
  PredictorConfig p = c.predictor;
  if (p.cache_path) p.cache_path = c.resolve(*p.cache_path);
  if (p.synthetic_model_path) p.synthetic_model_path = c.resolve(*p.synthetic_model_path);
  return make_predictor(p);
}

inline std::vector<std::size_t> explained_rows(const RunConfig& c, const Dataset& d) {
  return sample_instances(d, c.explain_n, c.explain_seed, c.stratified);
}

inline ExplainerOptions run_explainer_options(const RunConfig& c, const PromptTemplates* templates) {
  ExplainerOptions o;
  o.max_evals = c.max_evals;
  o.seed = c.attribution_seed;
  o.mode = c.walk_mode;
  o.weighted_background = c.weighted_background;
  o.variant = c.variants.front();
  o.templates = templates;
  return o;
}

// ---------------------------------------------------------------------------
// plan

inline CostPlan cmd_plan(const RunConfig& c, std::ostream& log) {
  c.validate();
  const Dataset d = load_run_dataset(c);
  const std::size_t m = c.plan_all_features ? d.feature_count() : d.numeric_features().size();
  const CostPlan p = plan_cost(c.explain_n, m, c.background_c, c.background_c, c.max_evals, c.walk_mode);
  nlohmann::ordered_json j;
  j["instances"] = p.instances;
  j["features"] = p.features;
  j["features_counted"] = c.plan_all_features ? "all" : "explained";
  j["background_rows"] = p.background_rows;
  j["centroids"] = p.centroids;
  j["max_evals"] = p.max_evals;
  j["walk_mode"] = to_string(p.mode);
  j["permutations"] = p.permutations;
  j["coalitions_per_permutation"] = p.coalitions_per_permutation;
  j["per_instance_calls"] = p.per_instance_calls;
  j["total_calls"] = p.total_calls;
  j["kernel_per_instance"] = p.kernel_per_instance;
  j["speedup"] = p.speedup;
  detail::write_json(detail::out_path(c, bundle::plan), j);
  detail::write_resolved_config(c);
  log << "plan: K=" << p.instances << " M=" << p.features << " B=" << p.background_rows << " max_evals=" << p.max_evals
      << " -> T=" << p.permutations << ", " << p.per_instance_calls << " calls per instance, " << p.total_calls
      << " total (kernel " << p.kernel_per_instance << " per instance, speedup " << text::fixed(p.speedup, 2) << "x)\n";
  return p;
}

// ---------------------------------------------------------------------------
// classify

inline ClassificationReport cmd_classify(const RunConfig& c, std::ostream& log) {
  c.validate();
  const Dataset d = load_run_dataset(c);
  const auto templates = run_templates(c);
  auto predictor = run_predictor(c);

  std::vector<std::size_t> rows;
  if (c.classify_n) rows = sample_instances(d, *c.classify_n, c.classify_seed);
  else {
    rows.resize(d.row_count());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
  }
  std::vector<PredictRequest> requests;
  requests.reserve(rows.size());
  for (auto r : rows) {
    PredictRequest req;
    req.prompt = render_instance_prompt(d, r, c.variants.front(), {}, templates);
    req.phase = Phase::classification;
    req.row = r;
    requests.push_back(std::move(req));
  }
  const auto outcomes = predictor->predict_batch(requests);

  std::vector<csv::Row> table{{"row", "label", "probability", "clamped", "status"}};
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t dropped = 0, clamped = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& o = outcomes[i];
    const auto label = std::to_string(d.labels[rows[i]]);
    if (o) {
      scores.push_back(o.value().probability);
      labels.push_back(d.labels[rows[i]]);
      clamped += static_cast<std::size_t>(o.value().clamped);
      table.push_back({std::to_string(rows[i]), label, text::exact(o.value().probability),
                       detail::flag_cell(o.value().clamped), "ok"});
    } else {
      ++dropped;
      table.push_back({std::to_string(rows[i]), label, "", "0",
                       std::string(to_string(o.error().kind)) + ": " + o.error().message});
    }
  }
  csv::write_file(detail::out_path(c, bundle::predictions), table);
  const auto report = classification_report(scores, labels, dropped, clamped);
  detail::record_ledger(c, "classify", predictor->ledger());
  detail::write_resolved_config(c);
  log << "classify: scored " << report.n_scored << " rows, " << dropped << " failed";
  if (report.roc_auc) log << ", ROC-AUC " << text::fixed(*report.roc_auc, 4);
  if (report.pr_auc) log << ", PR-AUC " << text::fixed(*report.pr_auc, 4);
  log << "\n";
  return report;
}

/// Reads predictions.csv back into scores and labels (failed rows skipped).
struct ScoredRows {
  std::vector<std::size_t> rows;
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t failed = 0;
  std::size_t clamped = 0;
};

inline ScoredRows read_predictions(const std::string& path) {
  const auto table = csv::read_file(path);
  if (table.empty() || table.front() != csv::Row{"row", "label", "probability", "clamped", "status"})
    throw AuditError("predictions file '" + path + "' has an unexpected header");
  ScoredRows out;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& r = table[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != 5) throw AuditError(path + ":" + std::to_string(i + 1) + ": expected 5 fields");
    if (r[4] != "ok") {
      ++out.failed;
      continue;
    }
    const auto row = text::parse_double(r[0]);
    const auto p = text::parse_double(r[2]);
    if (!row || !p || (r[1] != "0" && r[1] != "1"))
      throw AuditError(path + ":" + std::to_string(i + 1) + ": malformed prediction");
    out.rows.push_back(static_cast<std::size_t>(*row));
    out.scores.push_back(*p);
    out.labels.push_back(r[1] == "1" ? 1 : 0);
    out.clamped += static_cast<std::size_t>(r[3] == "1");
  }
  return out;
}

// ---------------------------------------------------------------------------
// explain

inline void write_background(const BackgroundSet& bg, const Dataset& d, const std::string& path) {
  csv::Row header{"weight"};
  for (const auto& f : d.schema) header.push_back(f.name);
  std::vector<csv::Row> table{header};
  for (std::size_t b = 0; b < bg.size(); ++b) {
    csv::Row row{text::exact(bg.weights[b])};
    for (const auto& cell : bg.rows[b])
      row.push_back(cell.missing() ? "" : cell.is_number() ? text::exact(cell.as_number()) : cell.as_category());
    table.push_back(std::move(row));
  }
  csv::write_file(path, table);
}

/// dependence_<feature>.csv per attributed feature: instance_id, feature_value, shap_value.
inline std::vector<std::string> write_dependence_files(const ShapMatrix& s, const Dataset& d, const RunConfig& c) {
  std::vector<std::string> written;
  std::set<std::string> used;
  for (std::size_t j = 0; j < s.feature_names.size(); ++j) {
    auto token = detail::file_token(s.feature_names[j]);
    if (!used.insert(token).second) {
      token += "_" + std::to_string(j + 1);
      used.insert(token);
    }
    const auto pairs = dependence_data(s, d, s.feature_names[j]);
    std::vector<csv::Row> table{{"instance_id", "feature_value", "shap_value"}};
    for (std::size_t k = 0; k < pairs.size(); ++k)
      table.push_back({std::to_string(s.instance_ids[k]), std::isnan(pairs[k].first) ? "" : text::exact(pairs[k].first),
                       text::exact(pairs[k].second)});
    const auto name = "dependence_" + token + ".csv";
    csv::write_file(detail::out_path(c, name), table);
    written.push_back(name);
  }
  return written;
}

inline ShapMatrix cmd_explain(const RunConfig& c, std::ostream& log) {
  cmd_plan(c, log);  // refuses budgets without a full permutation
  const Dataset d = load_run_dataset(c);
  const auto templates = run_templates(c);
  auto predictor = run_predictor(c);
  const auto rows = explained_rows(c, d);
  const auto bg = kmeans_background(d, c.background_c, c.background_seed, c.weighted_background);
  for (const auto& w : bg.warnings) log << "warning: " << w << "\n";
  write_background(bg, d, detail::out_path(c, bundle::background));

  auto s = permutation_shap(*predictor, d, rows, bg, run_explainer_options(c, &templates));
  s.provenance = "permutation explainer over " + std::to_string(bg.size()) + " background rows";
  write_shap_matrix(s, detail::out_path(c, bundle::shap));
  std::vector<csv::Row> imp{{"feature", "importance"}};
  const auto importance = s.importance();
  for (std::size_t j = 0; j < s.feature_names.size(); ++j)
    imp.push_back({s.feature_names[j], text::exact(importance[j])});
  csv::write_file(detail::out_path(c, bundle::importance), imp);
  write_dependence_files(s, d, c);
  detail::record_ledger(c, "explain", predictor->ledger());
  log << "explain: " << s.instance_ids.size() << " instances attributed, " << s.dropped.size() << " dropped\n";
  for (const auto& drop : s.dropped) log << "  dropped row " << drop.row << ": " << drop.reason << "\n";
  return s;
}

// ---------------------------------------------------------------------------
// selfexplain

inline std::vector<bool> selfexpl_modes(SelfExplMode m) {
  if (m == SelfExplMode::plain) return {false};
  if (m == SelfExplMode::rationale) return {true};
  return {false, true};
}

inline const char* selfexpl_file(bool with_rationale) {
  return with_rationale ? bundle::selfexpl_rationale : bundle::selfexpl_plain;
}

inline std::vector<std::vector<SelfExplanationRecord>> cmd_selfexplain(const RunConfig& c, std::ostream& log) {
  c.validate();
  const Dataset d = load_run_dataset(c);
  const auto templates = run_templates(c);
  auto predictor = run_predictor(c);
  std::vector<std::vector<SelfExplanationRecord>> all;
  for (bool rationale : selfexpl_modes(c.selfexpl_mode)) {
    auto records = elicit_feature_impacts(*predictor, d, rationale, c.variants.front(), templates);
    write_self_explanations(records, detail::out_path(c, selfexpl_file(rationale)));
    std::size_t failed = 0;
    for (const auto& r : records) failed += static_cast<std::size_t>(!r.parse_ok);
    log << "selfexplain (" << (rationale ? "rationale" : "plain") << "): " << records.size() << " features, "
        << failed << " unparsed\n";
    all.push_back(std::move(records));
  }
  detail::record_ledger(c, "selfexplain", predictor->ledger());
  detail::write_resolved_config(c);
  return all;
}

// ---------------------------------------------------------------------------
// audit

namespace detail {

inline nlohmann::ordered_json classification_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  j["roc_auc"] = optional_json(r.roc_auc);
  j["pr_auc"] = optional_json(r.pr_auc);
  j["prevalence"] = r.prevalence;
  j["pr_lift"] = optional_json(r.pr_lift);
  j["brier"] = r.brier;
  j["n_scored"] = r.n_scored;
  j["n_failed"] = r.n_dropped;
  j["n_clamped"] = r.n_clamped;
  return j;
}

inline nlohmann::ordered_json agreement_json(const std::optional<AgreementReport>& a) {
  if (!a) return {{"defined", false}};
  nlohmann::ordered_json j;
  j["defined"] = true;
  j["n_features"] = a->n_features;
  j["n_agree"] = a->n_agree;
  j["percent"] = a->percent;
  j["kappa"] = a->kappa;
  j["mcc"] = a->mcc;
  j["kappa_degenerate"] = a->kappa_degenerate;
  j["mcc_degenerate"] = a->mcc_degenerate;
  j["chance_level"] = a->chance_level;
  j["n_parse_failed"] = a->n_parse_failed;
  j["n_missing"] = a->n_missing;
  return j;
}

}  // namespace detail

struct AuditSummary {
  ClassificationReport classification;
  ImpactLabelVector shap_labels;
  std::vector<std::pair<std::string, std::optional<AgreementReport>>> agreement;  // per self-explanation mode
  std::optional<AlignmentReport> alignment;
  std::vector<RandomizationResult> sanity;
  std::optional<SensitivityReport> robustness;
};

inline AuditSummary cmd_audit(const RunConfig& c, std::ostream& log) {
  c.validate();
  const auto predictions_path = detail::require_artifact(c, bundle::predictions, "classify");
  const auto shap_path = detail::require_artifact(c, bundle::shap, "explain");
  detail::require_artifact(c, shap_sidecar_path(bundle::shap), "explain");
  for (bool rationale : selfexpl_modes(c.selfexpl_mode)) detail::require_artifact(c, selfexpl_file(rationale), "selfexplain");

  const Dataset d = load_run_dataset(c);
  AuditSummary out;
  nlohmann::ordered_json report;
  report["task"] = d.task_name;
  report["rows"] = d.row_count();

  // Classification quality.
  const auto scored = read_predictions(predictions_path);
  out.classification = classification_report(scored.scores, scored.labels, scored.failed, scored.clamped);
  report["classification"] = detail::classification_json(out.classification);
  std::vector<csv::Row> rel{{"bin_lower", "bin_upper", "count", "mean_predicted", "observed_frequency"}};
  for (const auto& b : out.classification.reliability_bins)
    rel.push_back({text::exact(b.lower), text::exact(b.upper), std::to_string(b.count),
                   detail::optional_cell(b.mean_predicted), detail::optional_cell(b.observed_frequency)});
  csv::write_file(detail::out_path(c, bundle::reliability), rel);

  // Attributions and their directional labels.
  const ShapMatrix s = read_shap_matrix(shap_path);
  const auto rule = c.mean_sign_direction ? DirectionRule::mean_sign : DirectionRule::pearson_label;
  out.shap_labels = rule == DirectionRule::mean_sign ? impact_labels_from_mean_sign(s) : impact_labels_from_shap(s, d);
  const auto importance = s.importance();
  nlohmann::ordered_json attribution;
  attribution["instances"] = s.instance_ids.size();
  attribution["dropped"] = s.dropped.size();
  attribution["base_value"] = s.base_value;
  attribution["direction_rule"] = rule == DirectionRule::mean_sign ? "mean_sign" : "pearson";
  attribution["features"] = nlohmann::ordered_json::array();
  for (std::size_t j = 0; j < s.feature_names.size(); ++j)
    attribution["features"].push_back({{"feature", s.feature_names[j]},
                                       {"importance", importance[j]},
                                       {"pearson_r", detail::optional_json(out.shap_labels.pearson_r[j])},
                                       {"label", to_string(out.shap_labels.labels[j])}});
  report["attribution"] = attribution;

  // Self-explanation agreement.
  std::vector<csv::Row> agree_rows{{"mode", "n_features", "n_agree", "percent", "kappa", "mcc", "kappa_degenerate",
                                    "mcc_degenerate", "chance_level", "n_parse_failed", "n_missing"}};
  std::vector<csv::Row> rank_rows{{"mode", "rank", "feature", "importance", "self_label", "shap_label", "agree"}};
  nlohmann::ordered_json agreement_json = nlohmann::ordered_json::object();
  for (bool rationale : selfexpl_modes(c.selfexpl_mode)) {
    const std::string mode = rationale ? "rationale" : "plain";
    const auto records = read_self_explanations(detail::require_artifact(c, selfexpl_file(rationale), "selfexplain"));
    auto a = agreement(records, out.shap_labels, importance);
    agreement_json[mode] = detail::agreement_json(a);
    if (a) {
      agree_rows.push_back({mode, std::to_string(a->n_features), std::to_string(a->n_agree), text::exact(a->percent),
                            text::exact(a->kappa), text::exact(a->mcc), detail::flag_cell(a->kappa_degenerate),
                            detail::flag_cell(a->mcc_degenerate), detail::flag_cell(a->chance_level),
                            std::to_string(a->n_parse_failed), std::to_string(a->n_missing)});
      for (const auto& r : a->per_rank)
        rank_rows.push_back({mode, std::to_string(r.rank), r.feature, text::exact(r.importance), to_string(r.self_label),
                             to_string(r.shap_label), detail::flag_cell(r.agree)});
      log << "audit: " << mode << " agreement " << text::fixed(a->percent, 1) << "% (" << a->n_agree << "/"
          << a->n_features << "), kappa " << text::fixed(a->kappa, 3) << (a->chance_level ? " [chance level]" : "")
          << "\n";
    } else {
      log << "audit: " << mode << " agreement undefined (no parsed self-explanations)\n";
    }
    out.agreement.emplace_back(mode, std::move(a));
  }
  csv::write_file(detail::out_path(c, bundle::agreement), agree_rows);
  csv::write_file(detail::out_path(c, bundle::per_rank), rank_rows);
  report["agreement"] = agreement_json;

  // Baseline alignment.
  std::vector<csv::Row> align_rows{
      {"feature", "importance_model", "importance_baseline", "label_model", "label_baseline", "match"}};
  if (c.baseline.kind == BaselineSource::Kind::none) {
    report["alignment"] = {{"skipped", true}};
  } else {
    ShapMatrix base;
    if (c.baseline.kind == BaselineSource::Kind::surrogate) {
      const auto model = fit_logistic_surrogate(d, c.surrogate_epochs, c.surrogate_learning_rate, c.surrogate_seed);
      for (const auto& w : model.warnings) log << "warning: " << w << "\n";
      save_surrogate(model, detail::out_path(c, bundle::surrogate));
      base = surrogate_shap(model, d, s.instance_ids);
      write_shap_matrix(base, detail::out_path(c, bundle::baseline_shap));
    } else {
      base = import_external_shap(c.resolve(c.baseline.path), d);
    }
    out.alignment = alignment(s, d, base, d, rule);
    const auto& al = *out.alignment;
    for (std::size_t j = 0; j < al.features.size(); ++j)
      align_rows.push_back({al.features[j], text::exact(al.importance_a[j]), text::exact(al.importance_b[j]),
                            to_string(al.labels_a[j]), to_string(al.labels_b[j]),
                            detail::flag_cell(al.labels_a[j] == al.labels_b[j])});
    report["alignment"] = {{"skipped", false},
                           {"source", c.baseline.kind == BaselineSource::Kind::surrogate ? "surrogate" : "import"},
                           {"explainer", to_string(base.explainer)},
                           {"n_features", al.n_features},
                           {"kendall_tau", detail::optional_json(al.kendall_tau)},
                           {"dir_pct", detail::optional_json(al.dir_pct)}};
    log << "audit: baseline alignment tau "
        << (al.kendall_tau ? text::fixed(*al.kendall_tau, 3) : std::string("undefined")) << ", Dir% "
        << (al.dir_pct ? text::fixed(*al.dir_pct, 1) : std::string("undefined")) << "\n";
  }
  csv::write_file(detail::out_path(c, bundle::alignment), align_rows);

  // Sanity and robustness re-invoke the model.
  std::unique_ptr<Predictor> predictor;
  if (c.sanity_check || c.robustness) predictor = run_predictor(c);
  const auto templates = run_templates(c);

  if (!c.sanity_check) {
    report["sanity"] = {{"skipped", true}};
  } else {
    const auto bg = kmeans_background(d, c.background_c, c.background_seed, c.weighted_background);
    std::vector<std::string> features = c.sanity_features;
    if (features.empty() && !s.feature_names.empty())
      features.push_back(s.feature_names[static_cast<std::size_t>(
          std::max_element(importance.begin(), importance.end()) - importance.begin())]);
    RandomizationOptions ro;
    ro.explainer = run_explainer_options(c, &templates);
    std::vector<csv::Row> rows{{"feature", "mean_abs_before", "mean_abs_after", "r_before", "r_after", "ignored", "passed"}};
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < features.size(); ++i) {
      auto res = feature_randomization_check(*predictor, d, s.instance_ids, bg, features[i],
                                             derive_seed(c.sanity_seed, i), ro);
      rows.push_back({res.feature, text::exact(res.mean_abs_before), text::exact(res.mean_abs_after),
                      detail::optional_cell(res.r_before), detail::optional_cell(res.r_after),
                      detail::flag_cell(res.ignored), detail::flag_cell(res.passed)});
      arr.push_back({{"feature", res.feature},
                     {"mean_abs_before", res.mean_abs_before},
                     {"mean_abs_after", res.mean_abs_after},
                     {"r_before", detail::optional_json(res.r_before)},
                     {"r_after", detail::optional_json(res.r_after)},
                     {"ignored", res.ignored},
                     {"passed", res.passed}});
      log << "audit: randomization check on '" << res.feature << "' " << (res.passed ? "passed" : "FAILED") << " (|r| "
          << (res.r_before ? text::fixed(std::abs(*res.r_before), 3) : std::string("undefined")) << " -> "
          << (res.r_after ? text::fixed(std::abs(*res.r_after), 3) : std::string("undefined")) << ")\n";
      out.sanity.push_back(std::move(res));
    }
    csv::write_file(detail::out_path(c, bundle::sanity), rows);
    report["sanity"] = {{"skipped", false}, {"checks", arr}};
  }

  if (!c.robustness) {
    report["robustness"] = {{"skipped", true}};
  } else {
    std::vector<std::size_t> rows(s.instance_ids.begin(),
                                  s.instance_ids.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(c.robustness_rows, s.instance_ids.size())));
    std::optional<SensitivityAttribution> attr;
    std::optional<BackgroundSet> bg;
    if (c.robustness_attribution) {
      bg = kmeans_background(d, c.background_c, c.background_seed, c.weighted_background);
      attr = SensitivityAttribution{&*bg, run_explainer_options(c, &templates)};
    }
    out.robustness = serialization_sensitivity(*predictor, d, rows, c.variants, attr, templates);
    std::vector<csv::Row> table{{"variant_a", "variant_b", "compared", "max_abs_delta", "mean_abs_delta", "kendall_tau"}};
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : out.robustness->pairs) {
      table.push_back({p.a, p.b, std::to_string(p.compared), detail::optional_cell(p.max_abs_delta),
                       detail::optional_cell(p.mean_abs_delta), detail::optional_cell(p.kendall_tau)});
      arr.push_back({{"variant_a", p.a},
                     {"variant_b", p.b},
                     {"compared", p.compared},
                     {"max_abs_delta", detail::optional_json(p.max_abs_delta)},
                     {"mean_abs_delta", detail::optional_json(p.mean_abs_delta)},
                     {"kendall_tau", detail::optional_json(p.kendall_tau)}});
    }
    csv::write_file(detail::out_path(c, bundle::robustness), table);
    report["robustness"] = {{"skipped", false}, {"rows", rows.size()}, {"failed", out.robustness->failed}, {"pairs", arr}};
  }

  if (predictor) detail::record_ledger(c, "audit", predictor->ledger());
  detail::write_json(detail::out_path(c, bundle::report), report);
  detail::write_resolved_config(c);
  return out;
}

/// plan -> classify -> explain -> selfexplain -> audit.
inline AuditSummary cmd_run_all(const RunConfig& c, std::ostream& log) {
  cmd_plan(c, log);
  cmd_classify(c, log);
  cmd_explain(c, log);
  cmd_selfexplain(c, log);
  return cmd_audit(c, log);
}

}  // namespace llmaudit

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "llmaudit/attribution.hpp"
#include "llmaudit/errors.hpp"
#include "llmaudit/keyvalue.hpp"
#include "llmaudit/predictor.hpp"
#include "llmaudit/promptgen.hpp"
#include "llmaudit/text.hpp"

namespace llmaudit {

enum class SelfExplMode { plain, rationale, both };

inline const char* to_string(SelfExplMode m) {
  switch (m) {
    case SelfExplMode::plain: return "plain";
    case SelfExplMode::rationale: return "rationale";
    case SelfExplMode::both: break;
  }
  return "both";
}

/// Where baseline attributions come from.
struct BaselineSource {
  enum class Kind { none, surrogate, import_file };
  Kind kind = Kind::surrogate;
  std::string path;  // import_file only

  [[nodiscard]] std::string text() const {
    switch (kind) {
      case Kind::none: return "none";
      case Kind::import_file: return "import:" + path;
      case Kind::surrogate: break;
    }
    return "surrogate";
  }
};

/// Everything one audit run depends on. Relative paths are resolved against
/// `base_dir` (the config file's directory), which is not persisted.
struct RunConfig {
  std::string dataset;
  std::string schema;
  std::string output_dir = "audit_out";
  std::string base_dir = ".";

  std::optional<std::size_t> classify_n;  // empty: every row
  std::uint64_t classify_seed = 1;

  std::size_t explain_n = 250;
  std::uint64_t explain_seed = 7;
  bool stratified = false;
  std::size_t background_c = 5;
  std::uint64_t background_seed = 11;
  bool weighted_background = true;
  std::uint64_t max_evals = 200;
  std::uint64_t attribution_seed = 3;
  WalkMode walk_mode = WalkMode::forward;
  bool plan_all_features = false;  // plan with every feature instead of only the explained ones

  std::vector<SerializationVariant> variants{SerializationVariant{}};
  SelfExplMode selfexpl_mode = SelfExplMode::both;

  BaselineSource baseline;
  std::size_t surrogate_epochs = 500;
  double surrogate_learning_rate = 0.5;
  std::uint64_t surrogate_seed = 5;
  bool mean_sign_direction = false;

  bool sanity_check = false;
  std::vector<std::string> sanity_features;  // empty: the most important explained feature
  std::uint64_t sanity_seed = 13;
  bool robustness = false;
  std::size_t robustness_rows = 20;
  bool robustness_attribution = false;

  std::optional<std::string> instance_template;
  std::optional<std::string> feature_template;
  std::optional<std::string> rationale_template;

  PredictorConfig predictor;

  [[nodiscard]] std::string resolve(const std::string& path) const {
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
  }

  void validate() const {
    if (dataset.empty()) throw AuditError("config: 'dataset' is required");
    if (schema.empty()) throw AuditError("config: 'schema' is required");
    if (explain_n < 1) throw AuditError("config: explain_n must be >= 1");
    if (background_c < 1) throw AuditError("config: background_c must be >= 1");
    if (variants.empty()) throw AuditError("config: at least one variant required");
    if (robustness && variants.size() < 2) throw AuditError("config: robustness needs at least two variants");
    if (baseline.kind == BaselineSource::Kind::import_file && baseline.path.empty())
      throw AuditError("config: baseline import path is empty");
    predictor.validate();
  }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  const auto s = text::to_lower(v);
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  throw AuditError("config: '" + key + "' expects true or false, got '" + v + "'");
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  const auto s = text::trim(v);
  std::uint64_t out = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (s.empty() || ec != std::errc{} || ptr != end)
    throw AuditError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  auto d = text::parse_double(v);
  if (!d) throw AuditError("config: '" + key + "' expects a number, got '" + v + "'");
  return *d;
}

inline std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  for (const auto& part : text::split(v, ','))
    if (auto t = text::trim(part); !t.empty()) out.emplace_back(t);
  return out;
}

inline std::optional<std::string> optional_text(const std::string& v) {
  if (text::trim(v).empty()) return std::nullopt;
  return std::string(text::trim(v));
}

}  // namespace detail

/// Sets one field by key. Predictor keys carry a "predictor." prefix.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  const std::string v(text::trim(value));
  auto& p = c.predictor;
  static const std::map<std::string, std::function<void(RunConfig&, PredictorConfig&, const std::string&, const std::string&)>>
      setters = {
          {"dataset", [](auto& c, auto&, auto&, auto& v) { c.dataset = v; }},
          {"schema", [](auto& c, auto&, auto&, auto& v) { c.schema = v; }},
          {"output_dir", [](auto& c, auto&, auto&, auto& v) { c.output_dir = v; }},
          {"classify_n", [](auto& c, auto&, auto& k, auto& v) {
             if (v == "all" || v.empty()) c.classify_n.reset();
             else c.classify_n = parse_count(k, v);
           }},
          {"classify_seed", [](auto& c, auto&, auto& k, auto& v) { c.classify_seed = parse_count(k, v); }},
          {"explain_n", [](auto& c, auto&, auto& k, auto& v) { c.explain_n = parse_count(k, v); }},
          {"explain_seed", [](auto& c, auto&, auto& k, auto& v) { c.explain_seed = parse_count(k, v); }},
          {"stratified", [](auto& c, auto&, auto& k, auto& v) { c.stratified = parse_bool(k, v); }},
          {"background_c", [](auto& c, auto&, auto& k, auto& v) { c.background_c = parse_count(k, v); }},
          {"background_seed", [](auto& c, auto&, auto& k, auto& v) { c.background_seed = parse_count(k, v); }},
          {"weighted_background", [](auto& c, auto&, auto& k, auto& v) { c.weighted_background = parse_bool(k, v); }},
          {"max_evals", [](auto& c, auto&, auto& k, auto& v) { c.max_evals = parse_count(k, v); }},
          {"attribution_seed", [](auto& c, auto&, auto& k, auto& v) { c.attribution_seed = parse_count(k, v); }},
          {"walk_mode", [](auto& c, auto&, auto& k, auto& v) {
             if (v == "forward") c.walk_mode = WalkMode::forward;
             else if (v == "antithetic") c.walk_mode = WalkMode::antithetic;
             else throw AuditError("config: '" + k + "' must be forward or antithetic");
           }},
          {"plan_features", [](auto& c, auto&, auto& k, auto& v) {
             if (v == "explained") c.plan_all_features = false;
             else if (v == "all") c.plan_all_features = true;
             else throw AuditError("config: '" + k + "' must be explained or all");
           }},
          {"variants", [](auto& c, auto&, auto&, auto& v) {
             c.variants.clear();
             for (const auto& id : parse_list(v)) c.variants.push_back(parse_variant(id));
           }},
          {"selfexpl_mode", [](auto& c, auto&, auto& k, auto& v) {
             if (v == "plain") c.selfexpl_mode = SelfExplMode::plain;
             else if (v == "rationale") c.selfexpl_mode = SelfExplMode::rationale;
             else if (v == "both") c.selfexpl_mode = SelfExplMode::both;
             else throw AuditError("config: '" + k + "' must be plain, rationale or both");
           }},
          {"baseline", [](auto& c, auto&, auto& k, auto& v) {
             if (v == "none") c.baseline = {BaselineSource::Kind::none, ""};
             else if (v == "surrogate") c.baseline = {BaselineSource::Kind::surrogate, ""};
             else if (v.rfind("import:", 0) == 0) c.baseline = {BaselineSource::Kind::import_file, v.substr(7)};
             else throw AuditError("config: '" + k + "' must be none, surrogate or import:<path>");
           }},
          {"surrogate_epochs", [](auto& c, auto&, auto& k, auto& v) { c.surrogate_epochs = parse_count(k, v); }},
          {"surrogate_learning_rate", [](auto& c, auto&, auto& k, auto& v) { c.surrogate_learning_rate = parse_real(k, v); }},
          {"surrogate_seed", [](auto& c, auto&, auto& k, auto& v) { c.surrogate_seed = parse_count(k, v); }},
          {"direction_rule", [](auto& c, auto&, auto& k, auto& v) {
             if (v == "pearson") c.mean_sign_direction = false;
             else if (v == "mean_sign") c.mean_sign_direction = true;
             else throw AuditError("config: '" + k + "' must be pearson or mean_sign");
           }},
          {"sanity_check", [](auto& c, auto&, auto& k, auto& v) { c.sanity_check = parse_bool(k, v); }},
          {"sanity_features", [](auto& c, auto&, auto&, auto& v) { c.sanity_features = parse_list(v); }},
          {"sanity_seed", [](auto& c, auto&, auto& k, auto& v) { c.sanity_seed = parse_count(k, v); }},
          {"robustness", [](auto& c, auto&, auto& k, auto& v) { c.robustness = parse_bool(k, v); }},
          {"robustness_rows", [](auto& c, auto&, auto& k, auto& v) { c.robustness_rows = parse_count(k, v); }},
          {"robustness_attribution", [](auto& c, auto&, auto& k, auto& v) { c.robustness_attribution = parse_bool(k, v); }},
          {"instance_template", [](auto& c, auto&, auto&, auto& v) { c.instance_template = optional_text(v); }},
          {"feature_template", [](auto& c, auto&, auto&, auto& v) { c.feature_template = optional_text(v); }},
          {"rationale_template", [](auto& c, auto&, auto&, auto& v) { c.rationale_template = optional_text(v); }},

          {"predictor.kind", [](auto&, auto& p, auto&, auto& v) { p.kind = parse_predictor_kind(v); }},
          {"predictor.endpoint_url", [](auto&, auto& p, auto&, auto& v) { p.endpoint_url = optional_text(v); }},
          {"predictor.model_name", [](auto&, auto& p, auto&, auto& v) { p.model_name = optional_text(v); }},
          {"predictor.temperature", [](auto&, auto& p, auto& k, auto& v) { p.temperature = parse_real(k, v); }},
          {"predictor.max_retries", [](auto&, auto& p, auto& k, auto& v) { p.max_retries = parse_count(k, v); }},
          {"predictor.parallelism", [](auto&, auto& p, auto& k, auto& v) { p.parallelism = parse_count(k, v); }},
          {"predictor.cache_path", [](auto&, auto& p, auto&, auto& v) { p.cache_path = optional_text(v); }},
          {"predictor.synthetic_model", [](auto&, auto& p, auto&, auto& v) { p.synthetic_model_path = optional_text(v); }},
          {"predictor.api_key_env", [](auto&, auto& p, auto&, auto& v) { p.api_key_env = v; }},
          {"predictor.timeout_ms", [](auto&, auto& p, auto& k, auto& v) {
             p.timeout = std::chrono::milliseconds(parse_count(k, v));
           }},
          {"predictor.retry_backoff_ms", [](auto&, auto& p, auto& k, auto& v) {
             p.retry_backoff = std::chrono::milliseconds(parse_count(k, v));
           }},
          {"predictor.strict_json", [](auto&, auto& p, auto& k, auto& v) { p.strict_json = parse_bool(k, v); }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) throw AuditError("config: unknown key '" + key + "'");
  it->second(c, p, key, v);
}

/// Top-level keys plus an optional [predictor] section.
inline RunConfig parse_run_config(std::string_view doc, std::string_view origin = "config",
                                  const std::string& base_dir = ".") {
  RunConfig c;
  c.base_dir = base_dir;
  for (const auto& section : kv::parse(doc, origin)) {
    std::string prefix;
    if (section.name == "predictor") prefix = "predictor.";
    else if (!section.name.empty())
      throw AuditError(std::string(origin) + ":" + std::to_string(section.line) + ": unknown section [" + section.name + "]");
    for (const auto& [key, value] : section.entries) set_config_value(c, prefix + key, value);
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  auto dir = std::filesystem::path(path).parent_path();
  return parse_run_config(kv::read_text(path), path, dir.empty() ? "." : dir.string());
}

/// Every field with its effective value, in the input format. The output
/// directory is left out: a bundle does not depend on where it is written.
inline std::string format_run_config(const RunConfig& c) {
  std::string out;
  auto put = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  auto join = [](const std::vector<std::string>& items) {
    std::string s;
    for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
    return s;
  };
  put("dataset", c.dataset);
  put("schema", c.schema);
  put("classify_n", c.classify_n ? std::to_string(*c.classify_n) : "all");
  put("classify_seed", std::to_string(c.classify_seed));
  put("explain_n", std::to_string(c.explain_n));
  put("explain_seed", std::to_string(c.explain_seed));
  put("stratified", flag(c.stratified));
  put("background_c", std::to_string(c.background_c));
  put("background_seed", std::to_string(c.background_seed));
  put("weighted_background", flag(c.weighted_background));
  put("max_evals", std::to_string(c.max_evals));
  put("attribution_seed", std::to_string(c.attribution_seed));
  put("walk_mode", to_string(c.walk_mode));
  put("plan_features", c.plan_all_features ? "all" : "explained");
  std::vector<std::string> ids;
  for (const auto& v : c.variants) ids.push_back(v.id());
  put("variants", join(ids));
  put("selfexpl_mode", to_string(c.selfexpl_mode));
  put("baseline", c.baseline.text());
  put("surrogate_epochs", std::to_string(c.surrogate_epochs));
  put("surrogate_learning_rate", text::exact(c.surrogate_learning_rate));
  put("surrogate_seed", std::to_string(c.surrogate_seed));
  put("direction_rule", c.mean_sign_direction ? "mean_sign" : "pearson");
  put("sanity_check", flag(c.sanity_check));
  put("sanity_features", join(c.sanity_features));
  put("sanity_seed", std::to_string(c.sanity_seed));
  put("robustness", flag(c.robustness));
  put("robustness_rows", std::to_string(c.robustness_rows));
  put("robustness_attribution", flag(c.robustness_attribution));
  put("instance_template", c.instance_template.value_or(""));
  put("feature_template", c.feature_template.value_or(""));
  put("rationale_template", c.rationale_template.value_or(""));

  const auto& p = c.predictor;
  out += "\n[predictor]\n";
  put("kind", to_string(p.kind));
  put("endpoint_url", p.endpoint_url.value_or(""));
  put("model_name", p.model_name.value_or(""));
  put("temperature", text::exact(p.temperature));
  put("max_retries", std::to_string(p.max_retries));
  put("parallelism", std::to_string(p.parallelism));
  put("cache_path", p.cache_path.value_or(""));
  put("synthetic_model", p.synthetic_model_path.value_or(""));
  put("api_key_env", p.api_key_env);
  put("timeout_ms", std::to_string(p.timeout.count()));
  put("retry_backoff_ms", std::to_string(p.retry_backoff.count()));
  put("strict_json", flag(p.strict_json));
  return out;
}

}  // namespace llmaudit

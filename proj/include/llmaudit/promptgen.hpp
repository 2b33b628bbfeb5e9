#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "llmaudit/errors.hpp"
#include "llmaudit/keyvalue.hpp"
#include "llmaudit/random.hpp"
#include "llmaudit/tabular.hpp"
#include "llmaudit/text.hpp"

namespace llmaudit {

// ---------------------------------------------------------------------------
// Templates

namespace placeholder {
inline constexpr std::string_view task_description = "<Task Description>";
inline constexpr std::string_view positive_class = "<Positive Class Name>";
inline constexpr std::string_view task_name = "<Task Name>";
inline constexpr std::string_view feature_name = "<feature name>";
inline constexpr std::string_view feature_value = "<feature value>";
}  // namespace placeholder

/// Prompt scaffolds. In the instance template, the line holding both
/// <feature name> and <feature value> is the row pattern, repeated once per
/// feature; the text between the two placeholders is the delimiter slot.
struct PromptTemplates {
  std::string instance = R"(Predict <Task Description>. Use the features provided below to assess the likelihood of <Positive Class Name>.

<Task Name> Details:
<feature name>: <feature value>

Provide your estimated probability of the <Positive Class Name>.
Do NOT perform coding or calculations, just provide the probability.

Your answer should only contain the probability estimate in JSON:
{
  "Estimated <Positive Class Name>":
  <float value between 0 and 1>
}
)";

  std::string feature = R"(You are working on predicting <Task Description>.
It is a binary classification task where the positive class corresponds to <Positive Class Name>.


One of the features is the following:
<feature name>

What impact do you think this feature will have on the classification task?
Provide your answer among 3 possible strings: positive | neutral | negative.
Do NOT output reasoning or explanations, just output the feature impact string.
Write it in the following format in JSON:


{
  "Feature impact": <string among
     positive | negative | neutral>,
}
)";

  std::string feature_with_rationale = R"(You are working on predicting <Task Description>.
It is a binary classification task where the positive class corresponds to <Positive Class Name>.


One of the features is the following:
<feature name>

What impact do you think this feature will have on the classification task?
Provide your answer among 3 possible strings: positive | neutral | negative.
Also provide a brief explanation of this feature's impact.
Just output the feature impact string and your explanation.
Write it in the following format in JSON:


{
  "Feature impact": <string among
     positive | negative | neutral>,
  "Explanation": <string value>
}
)";

  static const PromptTemplates& defaults() {
    static const PromptTemplates t;
    return t;
  }
};

/// Replaces the built-in scaffolds with file contents where a path is given.
inline PromptTemplates load_templates(const std::optional<std::string>& instance_path,
                                      const std::optional<std::string>& feature_path,
                                      const std::optional<std::string>& rationale_path) {
  PromptTemplates t;
  if (instance_path) {
    t.instance = kv::read_text(*instance_path);
    if (t.instance.find(placeholder::feature_name) == std::string::npos ||
        t.instance.find(placeholder::feature_value) == std::string::npos)
      throw AuditError("instance template '" + *instance_path + "' lacks a <feature name>/<feature value> row");
  }
  if (feature_path) t.feature = kv::read_text(*feature_path);
  if (rationale_path) t.feature_with_rationale = kv::read_text(*rationale_path);
  return t;
}

// ---------------------------------------------------------------------------
// Variants

enum class Delimiter { colon, equals, dash };

inline std::string_view delimiter_text(Delimiter d) {
  switch (d) {
    case Delimiter::equals: return " = ";
    case Delimiter::dash: return " - ";
    case Delimiter::colon: break;
  }
  return ": ";
}

/// Controlled perturbation of how a row is serialized.
struct SerializationVariant {
  std::optional<std::uint64_t> order_seed;
  bool anonymize = false;
  Delimiter delimiter = Delimiter::colon;

  /// Canonical id, e.g. "default", "order:7+anon+delim:equals".
  [[nodiscard]] std::string id() const {
    std::vector<std::string> parts;
    if (order_seed) parts.push_back("order:" + std::to_string(*order_seed));
    if (anonymize) parts.emplace_back("anon");
    if (delimiter == Delimiter::equals) parts.emplace_back("delim:equals");
    if (delimiter == Delimiter::dash) parts.emplace_back("delim:dash");
    if (parts.empty()) return "default";
    std::string out = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
    return out;
  }

  friend bool operator==(const SerializationVariant&, const SerializationVariant&) = default;
};

inline SerializationVariant parse_variant(std::string_view id) {
  SerializationVariant v;
  id = text::trim(id);
  if (id.empty() || id == "default") return v;
  for (const auto& part : text::split(id, '+')) {
    const std::string token(text::trim(part));
    if (token == "anon") {
      v.anonymize = true;
    } else if (token.rfind("order:", 0) == 0) {
      const auto seed = text::parse_double(token.substr(6));
      if (!seed || *seed < 0 || *seed != std::floor(*seed)) throw AuditError("variant: bad order seed in '" + token + "'");
      v.order_seed = static_cast<std::uint64_t>(*seed);
    } else if (token == "delim:colon") {
      v.delimiter = Delimiter::colon;
    } else if (token == "delim:equals") {
      v.delimiter = Delimiter::equals;
    } else if (token == "delim:dash") {
      v.delimiter = Delimiter::dash;
    } else {
      throw AuditError("variant: unknown component '" + token + "'");
    }
  }
  return v;
}

inline std::string alias_for(std::size_t feature) { return "f_" + std::to_string(feature + 1); }

// ---------------------------------------------------------------------------
// Rendering

enum class PromptKind { instance, feature, feature_with_rationale };

struct RenderedPrompt {
  std::string text;
  PromptKind kind = PromptKind::instance;
  std::string variant = "default";
  std::vector<std::size_t> feature_order;  // schema indices in rendered order
  std::vector<std::pair<std::string, std::string>> name_map;  // original -> alias; empty unless anonymized
  std::string subject;  // feature prompts: original name of the feature asked about

  /// Original feature name for a rendered name (identity when not anonymized).
  [[nodiscard]] std::string original_name(std::string_view shown) const {
    for (const auto& [original, alias] : name_map)
      if (alias == shown) return original;
    return std::string(shown);
  }
};

namespace detail {

inline std::string render_cell(const Cell& cell) {
  if (cell.missing()) return "unknown";
  if (cell.is_number()) return text::prompt_number(cell.as_number());
  return cell.as_category();
}

inline void fill_task(std::string& s, const Dataset& d) {
  text::replace_all(s, placeholder::task_description, d.task_description);
  text::replace_all(s, placeholder::positive_class, d.positive_class_name);
  text::replace_all(s, placeholder::task_name, d.task_name);
}

inline std::vector<std::pair<std::string, std::string>> make_name_map(const Dataset& d) {
  std::vector<std::pair<std::string, std::string>> map;
  for (std::size_t i = 0; i < d.schema.size(); ++i) map.emplace_back(d.schema[i].name, alias_for(i));
  return map;
}

inline std::vector<std::size_t> feature_order(std::size_t m, const SerializationVariant& v) {
  if (!v.order_seed) {
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    return order;
  }
  Rng rng(derive_seed(*v.order_seed, 0x0de5));
  return random_permutation(m, rng);
}

}  // namespace detail

/// Instance-level prompt for one row. `replacements`, when non-empty, has one
/// entry per schema feature; engaged entries override the row's cell.
inline RenderedPrompt render_instance_prompt(const Dataset& d, std::size_t row, const SerializationVariant& v = {},
                                             std::span<const std::optional<Cell>> replacements = {},
                                             const PromptTemplates& templates = PromptTemplates::defaults()) {
  if (row >= d.row_count()) throw AuditError("render_instance_prompt: row " + std::to_string(row) + " out of range");
  if (!replacements.empty() && replacements.size() != d.feature_count())
    throw AuditError("render_instance_prompt: replacement vector must have one entry per feature");

  RenderedPrompt p;
  p.kind = PromptKind::instance;
  p.variant = v.id();
  p.feature_order = detail::feature_order(d.feature_count(), v);
  if (v.anonymize) p.name_map = detail::make_name_map(d);

  // Locate the row pattern line.
  const std::string& tpl = templates.instance;
  const auto name_pos = tpl.find(placeholder::feature_name);
  const auto value_pos = tpl.find(placeholder::feature_value, name_pos);
  if (name_pos == std::string::npos || value_pos == std::string::npos)
    throw AuditError("instance template has no feature row pattern");
  const auto line_begin = tpl.rfind('\n', name_pos) == std::string::npos ? 0 : tpl.rfind('\n', name_pos) + 1;
  const auto line_end = std::min(tpl.find('\n', value_pos), tpl.size());
  const std::string prefix = tpl.substr(line_begin, name_pos - line_begin);
  const std::string suffix =
      tpl.substr(value_pos + placeholder::feature_value.size(), line_end - value_pos - placeholder::feature_value.size());
  const std::string_view delim = delimiter_text(v.delimiter);

  std::string rows_text;
  for (std::size_t k = 0; k < p.feature_order.size(); ++k) {
    const std::size_t f = p.feature_order[k];
    const auto& schema = d.schema[f];
    const Cell* cell = &d.rows[row][f];
    if (!replacements.empty() && replacements[f]) {
      const Cell& repl = *replacements[f];
      const bool ok = repl.missing() || (schema.kind == FeatureKind::numeric ? repl.is_number() : repl.is_category());
      if (!ok) throw AuditError("render_instance_prompt: replacement for '" + schema.name + "' has the wrong type");
      cell = &repl;
    }
    if (k) rows_text += '\n';
    rows_text += prefix;
    rows_text += v.anonymize ? alias_for(f) : schema.name;
    rows_text += delim;
    rows_text += detail::render_cell(*cell);
    rows_text += suffix;
  }

  std::string head = tpl.substr(0, line_begin);
  std::string tail = tpl.substr(line_end);
  detail::fill_task(head, d);
  detail::fill_task(tail, d);
  p.text = head + rows_text + tail;
  return p;
}

/// Feature-level prompt: plain impact question, or with a rationale request.
inline RenderedPrompt render_feature_prompt(const Dataset& d, std::size_t feature, bool want_rationale,
                                            const SerializationVariant& v = {},
                                            const PromptTemplates& templates = PromptTemplates::defaults()) {
  if (feature >= d.feature_count())
    throw AuditError("render_feature_prompt: feature " + std::to_string(feature) + " out of range");
  RenderedPrompt p;
  p.kind = want_rationale ? PromptKind::feature_with_rationale : PromptKind::feature;
  p.variant = v.id();
  p.feature_order = {feature};
  p.subject = d.schema[feature].name;
  if (v.anonymize) p.name_map = detail::make_name_map(d);
  p.text = want_rationale ? templates.feature_with_rationale : templates.feature;
  detail::fill_task(p.text, d);
  text::replace_all(p.text, placeholder::feature_name, v.anonymize ? alias_for(feature) : d.schema[feature].name);
  return p;
}

// ---------------------------------------------------------------------------
// Response parsing

struct ParseFailure {
  std::string reason;
};

struct ParsedProbability {
  double value = 0.0;
  bool clamped = false;
  std::string raw_text;
};

enum class ImpactLabel { negative, neutral, positive };

inline const char* to_string(ImpactLabel l) {
  switch (l) {
    case ImpactLabel::negative: return "negative";
    case ImpactLabel::positive: return "positive";
    case ImpactLabel::neutral: break;
  }
  return "neutral";
}

inline std::optional<ImpactLabel> parse_impact_token(std::string_view token) {
  const auto t = text::to_lower(text::trim(token));
  if (t == "positive") return ImpactLabel::positive;
  if (t == "neutral") return ImpactLabel::neutral;
  if (t == "negative") return ImpactLabel::negative;
  return std::nullopt;
}

struct FeatureImpactLabel {
  ImpactLabel label = ImpactLabel::neutral;
  std::optional<std::string> rationale;
};

namespace detail {

/// End index (exclusive) of the balanced {...} starting at `open`, honouring
/// JSON string quoting; npos if unbalanced.
inline std::size_t balanced_object_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

/// Drops commas that directly precede a closing brace or bracket.
inline std::string strip_trailing_commas(std::string_view s) {
  std::string out;
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      out.push_back(c);
      if (c == '\\' && i + 1 < s.size()) out.push_back(s[++i]);
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j < s.size() && (s[j] == '}' || s[j] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

/// First JSON object in `raw`. Lenient mode scans past prose and code fences
/// and tolerates trailing commas; strict mode requires the whole text to be
/// one object.
inline std::optional<nlohmann::json> first_json_object(std::string_view raw, bool strict) {
  if (strict) {
    auto j = nlohmann::json::parse(text::trim(raw), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
  }
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const auto end = balanced_object_end(raw, open);
    if (end == std::string_view::npos) continue;
    auto j = nlohmann::json::parse(strip_trailing_commas(raw.substr(open, end - open)), nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  return std::nullopt;
}

}  // namespace detail

/// Reads the probability under the first key starting with "Estimated".
/// Out-of-range values are clamped to [0,1] and flagged.
inline Expected<ParsedProbability, ParseFailure> parse_probability_response(std::string_view raw, bool strict = false) {
  const auto obj = detail::first_json_object(raw, strict);
  if (!obj) return ParseFailure{"no JSON object in response"};
  for (const auto& [key, value] : obj->items()) {
    if (!text::starts_with_icase(key, "Estimated")) continue;
    std::optional<double> v;
    if (value.is_number()) v = value.get<double>();
    else if (!strict && value.is_string()) v = text::parse_double(value.get<std::string>());
    if (!v || !std::isfinite(*v)) return ParseFailure{"value under '" + key + "' is not a number"};
    ParsedProbability out;
    out.raw_text = std::string(raw);
    out.value = std::clamp(*v, 0.0, 1.0);
    out.clamped = out.value != *v;
    return out;
  }
  return ParseFailure{"no key beginning with 'Estimated'"};
}

/// Reads "Feature impact" (and "Explanation" when present).
inline Expected<FeatureImpactLabel, ParseFailure> parse_impact_response(std::string_view raw, bool strict = false) {
  std::optional<std::string> label_text;
  std::optional<std::string> rationale;
  if (const auto obj = detail::first_json_object(raw, strict)) {
    for (const auto& [key, value] : obj->items()) {
      if (text::iequals(text::trim(key), "Feature impact") && value.is_string()) label_text = value.get<std::string>();
      if (text::iequals(text::trim(key), "Explanation") && value.is_string()) rationale = value.get<std::string>();
    }
  } else if (!strict) {
    // Models sometimes copy the template literally and leave the token unquoted.
    static const std::regex impact(R"re("Feature impact"\s*:\s*"?([A-Za-z]+))re", std::regex::icase);
    static const std::regex expl(R"re("Explanation"\s*:\s*"((?:[^"\\]|\\.)*)")re", std::regex::icase);
    const std::string s(raw);
    std::smatch m;
    if (std::regex_search(s, m, impact)) label_text = m[1].str();
    if (std::regex_search(s, m, expl)) rationale = m[1].str();
  }
  if (!label_text) return ParseFailure{"no 'Feature impact' value"};
  const auto label = parse_impact_token(*label_text);
  if (!label) return ParseFailure{"impact '" + *label_text + "' is not positive|neutral|negative"};
  FeatureImpactLabel out;
  out.label = *label;
  if (rationale) {
    const auto trimmed = text::trim(*rationale);
    if (!trimmed.empty()) out.rationale = std::string(trimmed);
  }
  return out;
}

}  // namespace llmaudit

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "llmaudit/csv.hpp"
#include "llmaudit/predictor.hpp"
#include "llmaudit/promptgen.hpp"

namespace llmaudit {

struct SelfExplanationRecord {
  std::string feature;  // original name, even under anonymization
  std::optional<FeatureImpactLabel> label;  // absent iff parse_ok is false
  bool with_rationale = false;
  std::string raw_response;
  bool parse_ok = false;

  friend bool operator==(const SelfExplanationRecord& a, const SelfExplanationRecord& b) {
    const bool labels_equal = a.label.has_value() == b.label.has_value() &&
                              (!a.label || (a.label->label == b.label->label && a.label->rationale == b.label->rationale));
    return a.feature == b.feature && labels_equal && a.with_rationale == b.with_rationale &&
           a.raw_response == b.raw_response && a.parse_ok == b.parse_ok;
  }
};

/// Asks the model, one prompt per feature, which direction each feature
/// pushes the positive class. Records come back in schema order.
inline std::vector<SelfExplanationRecord> elicit_feature_impacts(
    Predictor& predictor, const Dataset& d, bool want_rationale, const SerializationVariant& variant = {},
    const PromptTemplates& templates = PromptTemplates::defaults()) {
  std::vector<RenderedPrompt> prompts;
  prompts.reserve(d.feature_count());
  for (std::size_t f = 0; f < d.feature_count(); ++f)
    prompts.push_back(render_feature_prompt(d, f, want_rationale, variant, templates));

  auto answers = predictor.ask_impact_batch(prompts, Phase::selfexpl);
  std::vector<SelfExplanationRecord> records;
  records.reserve(prompts.size());
  for (std::size_t f = 0; f < prompts.size(); ++f) {
    SelfExplanationRecord rec;
    rec.feature = d.schema[f].name;
    rec.with_rationale = want_rationale;
    if (answers[f]) {
      rec.label = answers[f].value().label;
      rec.raw_response = answers[f].value().raw;
      rec.parse_ok = true;
    } else {
      rec.raw_response = answers[f].error().message;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

/// CSV columns: feature, label, with_rationale, parse_ok, rationale.
inline void write_self_explanations(const std::vector<SelfExplanationRecord>& records, const std::string& path) {
  std::vector<csv::Row> rows{{"feature", "label", "with_rationale", "parse_ok", "rationale"}};
  for (const auto& r : records) {
    rows.push_back({r.feature, r.label ? to_string(r.label->label) : "", r.with_rationale ? "1" : "0",
                    r.parse_ok ? "1" : "0", r.label && r.label->rationale ? *r.label->rationale : ""});
  }
  csv::write_file(path, rows);
}

/// Inverse of write_self_explanations (raw responses are not persisted there).
inline std::vector<SelfExplanationRecord> read_self_explanations(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows.front() != csv::Row{"feature", "label", "with_rationale", "parse_ok", "rationale"})
    throw AuditError("self-explanation file '" + path + "' has an unexpected header");
  std::vector<SelfExplanationRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.size() == 1 && r[0].empty()) continue;
    if (r.size() != 5) throw AuditError(path + ":" + std::to_string(i + 1) + ": expected 5 fields");
    SelfExplanationRecord rec;
    rec.feature = r[0];
    rec.with_rationale = r[2] == "1";
    rec.parse_ok = r[3] == "1";
    if (rec.parse_ok) {
      auto label = parse_impact_token(r[1]);
      if (!label) throw AuditError(path + ":" + std::to_string(i + 1) + ": bad label '" + r[1] + "'");
      FeatureImpactLabel l;
      l.label = *label;
      if (!r[4].empty()) l.rationale = r[4];
      rec.label = l;
    }
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace llmaudit

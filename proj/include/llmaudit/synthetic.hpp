#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmaudit/keyvalue.hpp"
#include "llmaudit/predictor.hpp"

namespace llmaudit {

/// Deterministic stand-in for a hosted model. It reads feature values back out
/// of the rendered prompt text, so it sees exactly what a remote model would
/// (masking, rounding, ordering, "unknown" cells) and nothing more.
///
///   score = bias + sum_i w_i x_i + sum_(a,b) w_ab x_a x_b + sum_c w_c[value_c]
///   p     = sigmoid(score)  (logistic link)  or  score  (identity link)
///
/// Identity-link outputs outside [0,1] are emitted as-is and clamped by the
/// response parser, like any out-of-range model answer.
struct SyntheticModel {
  enum class Link { logistic, identity };
  struct Interaction {
    std::string a, b;
    double weight = 0.0;
  };

  Link link = Link::logistic;
  double bias = 0.0;
  std::map<std::string, double> weights;
  std::map<std::string, std::map<std::string, double>> category_weights;
  std::vector<Interaction> interactions;
  std::map<std::string, std::string> claims;  // optional self-explanation overrides
  double missing_value = 0.0;                 // value assumed for "unknown" cells

  [[nodiscard]] double score(const std::map<std::string, double>& numeric,
                             const std::map<std::string, std::string>& categorical) const {
    auto value_of = [&](const std::string& name) {
      auto it = numeric.find(name);
      return it == numeric.end() ? missing_value : it->second;
    };
    double s = bias;
    for (const auto& [name, w] : weights) s += w * value_of(name);
    for (const auto& t : interactions) s += t.weight * value_of(t.a) * value_of(t.b);
    for (const auto& [name, table] : category_weights) {
      if (auto c = categorical.find(name); c != categorical.end())
        if (auto w = table.find(c->second); w != table.end()) s += w->second;
    }
    return s;
  }

  [[nodiscard]] double predict(const std::map<std::string, double>& numeric,
                               const std::map<std::string, std::string>& categorical = {}) const {
    const double s = score(numeric, categorical);
    return link == Link::logistic ? 1.0 / (1.0 + std::exp(-s)) : s;
  }

  [[nodiscard]] bool knows(const std::string& name) const {
    if (weights.count(name) || category_weights.count(name)) return true;
    for (const auto& t : interactions)
      if (t.a == name || t.b == name) return true;
    return false;
  }

  [[nodiscard]] ImpactLabel implied_impact(const std::string& name) const {
    if (auto c = claims.find(name); c != claims.end())
      if (auto l = parse_impact_token(c->second)) return *l;
    auto it = weights.find(name);
    if (it == weights.end() || std::abs(it->second) <= 1e-12) return ImpactLabel::neutral;
    return it->second > 0 ? ImpactLabel::positive : ImpactLabel::negative;
  }

  static SyntheticModel from_json(const nlohmann::json& j) {
    SyntheticModel m;
    const auto link = j.value("link", std::string("logistic"));
    if (link == "logistic") m.link = Link::logistic;
    else if (link == "identity") m.link = Link::identity;
    else throw AuditError("synthetic model: link must be logistic or identity");
    m.bias = j.value("bias", 0.0);
    m.missing_value = j.value("missing_value", 0.0);
    if (j.contains("weights")) m.weights = j["weights"].get<std::map<std::string, double>>();
    if (j.contains("category_weights"))
      m.category_weights = j["category_weights"].get<std::map<std::string, std::map<std::string, double>>>();
    if (j.contains("claims")) m.claims = j["claims"].get<std::map<std::string, std::string>>();
    if (j.contains("interactions"))
      for (const auto& t : j["interactions"])
        m.interactions.push_back({t.at(0).get<std::string>(), t.at(1).get<std::string>(), t.at(2).get<double>()});
    return m;
  }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["link"] = link == Link::logistic ? "logistic" : "identity";
    j["bias"] = bias;
    j["weights"] = weights;
    if (!category_weights.empty()) j["category_weights"] = category_weights;
    if (!interactions.empty()) {
      j["interactions"] = nlohmann::ordered_json::array();
      for (const auto& t : interactions) j["interactions"].push_back({t.a, t.b, t.weight});
    }
    if (!claims.empty()) j["claims"] = claims;
    if (missing_value != 0.0) j["missing_value"] = missing_value;
    return j;
  }

  static SyntheticModel load(const std::string& path) {
    auto j = nlohmann::json::parse(kv::read_text(path), nullptr, false);
    if (j.is_discarded()) throw AuditError("synthetic model: '" + path + "' is not valid JSON");
    return from_json(j);
  }
};

class SyntheticBackend : public ResponseBackend {
public:
  explicit SyntheticBackend(SyntheticModel model) : model_(std::move(model)) {}

  Expected<std::string, BackendFailure> respond(const RenderedPrompt& prompt) override {
    if (prompt.kind != PromptKind::instance) return impact_answer(prompt);

    std::map<std::string, double> numeric;
    std::map<std::string, std::string> categorical;
    std::size_t begin = 0;
    const std::string& t = prompt.text;
    while (begin <= t.size()) {
      auto end = t.find('\n', begin);
      if (end == std::string::npos) end = t.size();
      read_line(std::string_view(t).substr(begin, end - begin), prompt, numeric, categorical);
      begin = end + 1;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", model_.predict(numeric, categorical));
    return std::string("{\"Estimated probability\": ") + buf + "}";
  }

  [[nodiscard]] const SyntheticModel& model() const noexcept { return model_; }

private:
  void read_line(std::string_view line, const RenderedPrompt& prompt, std::map<std::string, double>& numeric,
                 std::map<std::string, std::string>& categorical) const {
    // Names may themselves contain a delimiter ("equity - share capital"), so
    // try every split point and keep the one whose prefix is a known feature.
    for (const std::string_view delim : {": ", " = ", " - "}) {
      for (auto pos = line.find(delim); pos != std::string_view::npos; pos = line.find(delim, pos + 1)) {
        const std::string name = prompt.original_name(line.substr(0, pos));
        if (!model_.knows(name)) continue;
        const auto value = line.substr(pos + delim.size());
        if (model_.category_weights.count(name)) {
          categorical[name] = std::string(text::trim(value));
        } else if (auto v = text::parse_double(value)) {
          numeric[name] = *v;
        }
        return;
      }
    }
  }

  Expected<std::string, BackendFailure> impact_answer(const RenderedPrompt& prompt) const {
    nlohmann::ordered_json j;
    const auto label = model_.implied_impact(prompt.subject);
    j["Feature impact"] = to_string(label);
    if (prompt.kind == PromptKind::feature_with_rationale) {
      auto it = model_.weights.find(prompt.subject);
      j["Explanation"] = it == model_.weights.end() ? std::string("The model does not use this feature.")
                                                    : "Coefficient " + text::exact(it->second) + " on this feature.";
    }
    return j.dump();
  }

  SyntheticModel model_;
};

}  // namespace llmaudit

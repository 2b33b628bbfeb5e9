#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmaudit/attribution.hpp"
#include "llmaudit/metrics.hpp"
#include "llmaudit/predictor.hpp"
#include "llmaudit/random.hpp"

namespace llmaudit {

// ---------------------------------------------------------------------------
// Feature randomization

struct RandomizationOptions {
  ExplainerOptions explainer;
  bool exact = false;                 // use the brute-force oracle instead of permutations
  double zero_tolerance = 1e-9;       // mean |phi| at or below this counts as ignored
  double collapse_threshold = 0.1;    // |r| after the shuffle must fall below this
};

struct RandomizationResult {
  std::string feature;
  double mean_abs_before = 0.0;
  double mean_abs_after = 0.0;
  std::optional<double> r_before;  // Pearson(original value, phi before)
  std::optional<double> r_after;   // Pearson(original value, phi after the shuffle)
  bool ignored = false;            // the feature carried no attribution before the shuffle
  bool passed = false;
  std::size_t instances = 0;
};

/// Copy of `d` whose `feature` column is permuted across rows.
inline Dataset shuffle_column(const Dataset& d, std::size_t feature, std::uint64_t seed) {
  Dataset out = d;
  Rng rng(seed);
  const auto perm = random_permutation(d.row_count(), rng);
  for (std::size_t r = 0; r < d.row_count(); ++r) out.rows[r][feature] = d.rows[perm[r]][feature];
  return out;
}

/// Re-explains `rows` after a seeded within-column shuffle of `feature` and
/// compares attribution magnitude and value dependence before and after.
inline RandomizationResult feature_randomization_check(Predictor& predictor, const Dataset& d,
                                                       std::span<const std::size_t> rows, const BackgroundSet& bg,
                                                       std::string_view feature, std::uint64_t seed,
                                                       const RandomizationOptions& opt = {}) {
  const auto f = d.feature_index(feature);
  if (!f) throw AuditError("feature_randomization_check: unknown feature '" + std::string(feature) + "'");
  if (d.schema[*f].kind != FeatureKind::numeric)
    throw AuditError("feature_randomization_check: feature '" + std::string(feature) + "' is not numeric");

  ExplainerOptions eo = opt.explainer;
  eo.phase = Phase::robustness;
  auto explain = [&](const Dataset& data) {
    return opt.exact ? exact_shap_rows(predictor, data, rows, bg, eo) : permutation_shap(predictor, data, rows, bg, eo);
  };
  const Dataset shuffled = shuffle_column(d, *f, seed);
  const ShapMatrix before = explain(d);
  const ShapMatrix after = explain(shuffled);

  const auto col = *before.feature_column(feature);
  RandomizationResult res;
  res.feature = std::string(feature);
  std::vector<double> x_before, phi_before, x_after, phi_after;
  for (std::size_t k = 0; k < before.instance_ids.size(); ++k) {
    const auto& cell = d.rows[before.instance_ids[k]][*f];
    x_before.push_back(cell.is_number() ? cell.as_number() : std::nan(""));
    phi_before.push_back(before.values[k][col]);
  }
  for (std::size_t k = 0; k < after.instance_ids.size(); ++k) {
    const auto& cell = d.rows[after.instance_ids[k]][*f];
    x_after.push_back(cell.is_number() ? cell.as_number() : std::nan(""));
    phi_after.push_back(after.values[k][col]);
  }
  auto mean_abs = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  res.mean_abs_before = mean_abs(phi_before);
  res.mean_abs_after = mean_abs(phi_after);
  res.r_before = pearson(x_before, phi_before);
  res.r_after = pearson(x_after, phi_after);
  res.instances = after.instance_ids.size();
  res.ignored = res.mean_abs_before <= opt.zero_tolerance;
  if (res.ignored)
    res.passed = res.mean_abs_after <= opt.zero_tolerance;
  else
    res.passed = !res.r_after || std::abs(*res.r_after) < opt.collapse_threshold;
  return res;
}

// ---------------------------------------------------------------------------
// Serialization robustness

struct VariantPairStats {
  std::string a, b;
  std::optional<double> max_abs_delta;  // undefined when no instance scored under both
  std::optional<double> mean_abs_delta;
  std::size_t compared = 0;
  std::optional<double> kendall_tau;  // importance rankings, when attribution is enabled
};

struct SensitivityReport {
  std::vector<std::string> variants;
  std::vector<std::size_t> rows;
  std::vector<std::vector<std::optional<double>>> probabilities;  // variant x row
  std::vector<VariantPairStats> pairs;
  std::size_t failed = 0;
};

struct SensitivityAttribution {
  const BackgroundSet* background = nullptr;
  ExplainerOptions explainer;
};

/// Scores `rows` under every variant and summarizes per-pair prediction
/// deltas; with `attribution` set, also compares importance rankings.
inline SensitivityReport serialization_sensitivity(Predictor& predictor, const Dataset& d,
                                                   std::span<const std::size_t> rows,
                                                   std::span<const SerializationVariant> variants,
                                                   const std::optional<SensitivityAttribution>& attribution = std::nullopt,
                                                   const PromptTemplates& templates = PromptTemplates::defaults()) {
  if (variants.size() < 2) throw AuditError("serialization_sensitivity: at least two variants required");
  SensitivityReport rep;
  rep.rows.assign(rows.begin(), rows.end());
  std::vector<std::vector<double>> importance;
  for (const auto& v : variants) {
    rep.variants.push_back(v.id());
    std::vector<PredictRequest> requests;
    for (auto row : rows) {
      PredictRequest req;
      req.prompt = render_instance_prompt(d, row, v, {}, templates);
      req.phase = Phase::robustness;
      req.row = row;
      requests.push_back(std::move(req));
    }
    const auto outcomes = predictor.predict_batch(requests);
    std::vector<std::optional<double>> probs;
    for (const auto& o : outcomes) {
      if (o) probs.push_back(o.value().probability);
      else {
        probs.push_back(std::nullopt);
        ++rep.failed;
      }
    }
    rep.probabilities.push_back(std::move(probs));
    if (attribution && attribution->background) {
      ExplainerOptions eo = attribution->explainer;
      eo.variant = v;
      eo.phase = Phase::robustness;
      if (!eo.templates) eo.templates = &templates;
      importance.push_back(permutation_shap(predictor, d, rows, *attribution->background, eo).importance());
    }
  }
  for (std::size_t i = 0; i < variants.size(); ++i)
    for (std::size_t j = i + 1; j < variants.size(); ++j) {
      VariantPairStats st;
      st.a = rep.variants[i];
      st.b = rep.variants[j];
      double max_d = 0.0, sum_d = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& pa = rep.probabilities[i][r];
        const auto& pb = rep.probabilities[j][r];
        if (!pa || !pb) continue;
        const double delta = std::abs(*pa - *pb);
        max_d = std::max(max_d, delta);
        sum_d += delta;
        ++st.compared;
      }
      if (st.compared) {
        st.max_abs_delta = max_d;
        st.mean_abs_delta = sum_d / static_cast<double>(st.compared);
      }
      if (!importance.empty()) st.kendall_tau = kendall_tau_importance(importance[i], importance[j]);
      rep.pairs.push_back(std::move(st));
    }
  return rep;
}

}  // namespace llmaudit

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "llmaudit/attribution.hpp"
#include "llmaudit/errors.hpp"
#include "llmaudit/promptgen.hpp"
#include "llmaudit/selfexpl.hpp"
#include "llmaudit/tabular.hpp"

namespace llmaudit {

// Undefined statistics are std::nullopt, never NaN.

// ---------------------------------------------------------------------------
// Classification quality

namespace detail {
inline void check_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw AuditError("metrics: scores and labels differ in length");
  for (int y : labels)
    if (y != 0 && y != 1) throw AuditError("metrics: labels must be 0 or 1");
}
}  // namespace detail

/// P(random positive outranks random negative), ties counting one half.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scores(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) {
        positive_rank_sum += midrank;
        ++positives;
      }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = static_cast<double>(positives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

/// Average precision: sum over score thresholds (descending) of precision at
/// the threshold times the recall gained there. A block of tied scores is
/// entered all at once, so every positive in it shares the block's precision.
inline std::optional<double> pr_auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_scores(scores, labels);
  const std::size_t n = scores.size();
  const auto total_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (total_pos == 0) return std::nullopt;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i, block_pos = 0;
    while (j < n && scores[idx[j]] == scores[idx[i]]) block_pos += static_cast<std::size_t>(labels[idx[j++]] == 1);
    tp += block_pos;
    seen += j - i;
    ap += (static_cast<double>(tp) / static_cast<double>(seen)) *
          (static_cast<double>(block_pos) / static_cast<double>(total_pos));
    i = j;
  }
  return ap;
}

inline std::optional<double> pr_lift(double pr, double prevalence) {
  if (!(prevalence > 0.0)) return std::nullopt;
  return pr / prevalence;
}

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> mean_predicted;  // empty bins have neither mean
  std::optional<double> observed_frequency;
  std::size_t count = 0;
};

struct Calibration {
  double brier = 0.0;
  std::vector<ReliabilityBin> bins;
};

/// Brier score and equal-width reliability bins over [0,1]; bin k holds
/// scores in [k/n, (k+1)/n), the last bin also holds 1.0.
inline Calibration brier_and_reliability(std::span<const double> scores, std::span<const int> labels,
                                         std::size_t n_bins = 10) {
  detail::check_scores(scores, labels);
  if (n_bins < 1) throw AuditError("brier_and_reliability: at least one bin required");
  Calibration out;
  std::vector<double> sum_pred(n_bins, 0.0), sum_obs(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double e = scores[i] - labels[i];
    out.brier += e * e;
    auto b = static_cast<std::size_t>(std::floor(scores[i] * static_cast<double>(n_bins)));
    b = std::min(b, n_bins - 1);
    sum_pred[b] += scores[i];
    sum_obs[b] += labels[i];
    ++count[b];
  }
  if (!scores.empty()) out.brier /= static_cast<double>(scores.size());
  for (std::size_t b = 0; b < n_bins; ++b) {
    ReliabilityBin bin;
    bin.lower = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    bin.count = count[b];
    if (count[b]) {
      bin.mean_predicted = sum_pred[b] / static_cast<double>(count[b]);
      bin.observed_frequency = sum_obs[b] / static_cast<double>(count[b]);
    }
    out.bins.push_back(bin);
  }
  return out;
}

struct ClassificationReport {
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  double prevalence = 0.0;
  std::optional<double> pr_lift;
  double brier = 0.0;
  std::vector<ReliabilityBin> reliability_bins;
  std::size_t n_scored = 0;
  std::size_t n_dropped = 0;
  std::size_t n_clamped = 0;
};

inline ClassificationReport classification_report(std::span<const double> scores, std::span<const int> labels,
                                                  std::size_t n_dropped = 0, std::size_t n_clamped = 0,
                                                  std::size_t n_bins = 10) {
  ClassificationReport r;
  r.roc_auc = roc_auc(scores, labels);
  r.pr_auc = pr_auc(scores, labels);
  if (!labels.empty())
    r.prevalence = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(labels.size());
  if (r.pr_auc) r.pr_lift = pr_lift(*r.pr_auc, r.prevalence);
  auto cal = brier_and_reliability(scores, labels, n_bins);
  r.brier = cal.brier;
  r.reliability_bins = std::move(cal.bins);
  r.n_scored = scores.size();
  r.n_dropped = n_dropped;
  r.n_clamped = n_clamped;
  return r;
}

// ---------------------------------------------------------------------------
// Correlation and impact labels

namespace detail {
inline bool effectively_constant(std::span<const double> v) {
  if (v.empty()) return true;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return *hi - *lo <= 1e-12 * std::max({std::abs(*hi), std::abs(*lo), 1e-300});
}
}  // namespace detail

/// Pearson r over pairs where x is not NaN; undefined with fewer than two
/// pairs or when either side has no spread.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw AuditError("pearson: length mismatch");
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isnan(x[i]) && !std::isnan(y[i])) {
      xs.push_back(x[i]);
      ys.push_back(y[i]);
    }
  if (xs.size() < 2 || detail::effectively_constant(xs) || detail::effectively_constant(ys)) return std::nullopt;
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline constexpr double impact_threshold = 0.1;

/// positive if r > 0.1, negative if r < -0.1, neutral otherwise or undefined.
inline ImpactLabel label_from_correlation(std::optional<double> r) {
  if (!r) return ImpactLabel::neutral;
  if (*r > impact_threshold) return ImpactLabel::positive;
  if (*r < -impact_threshold) return ImpactLabel::negative;
  return ImpactLabel::neutral;
}

struct ImpactLabelVector {
  std::vector<std::string> features;
  std::vector<std::optional<double>> pearson_r;
  std::vector<ImpactLabel> labels;

  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
      if (features[i] == name) return i;
    return std::nullopt;
  }
};

/// Direction of each attributed feature from the correlation between its
/// values and its attributions across the explained instances.
inline ImpactLabelVector impact_labels_from_shap(const ShapMatrix& s, const Dataset& d) {
  if (s.instance_ids.size() < 2) throw AuditError("impact_labels_from_shap: at least two explained instances required");
  ImpactLabelVector out;
  for (std::size_t j = 0; j < s.feature_names.size(); ++j) {
    const auto pairs = dependence_data(s, d, s.feature_names[j]);
    std::vector<double> x, y;
    for (const auto& [v, phi] : pairs) {
      x.push_back(v);
      y.push_back(phi);
    }
    const auto r = pearson(x, y);
    out.features.push_back(s.feature_names[j]);
    out.pearson_r.push_back(r);
    out.labels.push_back(label_from_correlation(r));
  }
  return out;
}

/// Alternative direction: sign of the mean attribution per feature.
inline ImpactLabelVector impact_labels_from_mean_sign(const ShapMatrix& s) {
  ImpactLabelVector out;
  for (std::size_t j = 0; j < s.feature_names.size(); ++j) {
    double mean = 0.0;
    for (const auto& row : s.values) mean += row[j];
    if (!s.values.empty()) mean /= static_cast<double>(s.values.size());
    out.features.push_back(s.feature_names[j]);
    out.pearson_r.push_back(std::nullopt);
    out.labels.push_back(mean > 0 ? ImpactLabel::positive : mean < 0 ? ImpactLabel::negative : ImpactLabel::neutral);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Agreement statistics on three-way labels

struct LabelAgreementStats {
  std::size_t n = 0;
  std::size_t n_agree = 0;
  double percent = 0.0;
  double kappa = 0.0;
  double mcc = 0.0;
  bool kappa_degenerate = false;  // chance agreement of 1; reported as 0
  bool mcc_degenerate = false;    // a constant label vector; reported as 0
};

/// Percent agreement, Cohen's kappa and multiclass (Gorodkin) MCC from the
/// 3x3 confusion of two label vectors. Identical vectors score (100, 1, 1).
inline std::optional<LabelAgreementStats> label_agreement(std::span<const ImpactLabel> a,
                                                          std::span<const ImpactLabel> b) {
  if (a.size() != b.size()) throw AuditError("label_agreement: length mismatch");
  if (a.empty()) return std::nullopt;
  double confusion[3][3] = {};
  for (std::size_t i = 0; i < a.size(); ++i)
    confusion[static_cast<int>(a[i])][static_cast<int>(b[i])] += 1.0;

  LabelAgreementStats st;
  st.n = a.size();
  const double n = static_cast<double>(st.n);
  double diag = 0.0, row[3] = {}, col[3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      row[i] += confusion[i][j];
      col[j] += confusion[i][j];
      if (i == j) diag += confusion[i][j];
    }
  st.n_agree = static_cast<std::size_t>(diag);
  st.percent = 100.0 * diag / n;
  if (st.n_agree == st.n) {
    st.kappa = st.mcc = 1.0;
    return st;
  }
  const double po = diag / n;
  double pe = 0.0, sum_rc = 0.0, sum_r2 = 0.0, sum_c2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    pe += (row[k] / n) * (col[k] / n);
    sum_rc += row[k] * col[k];
    sum_r2 += row[k] * row[k];
    sum_c2 += col[k] * col[k];
  }
  if (1.0 - pe <= 0.0) st.kappa_degenerate = true;
  else st.kappa = (po - pe) / (1.0 - pe);
  const double denom = (n * n - sum_r2) * (n * n - sum_c2);
  if (denom <= 0.0) st.mcc_degenerate = true;
  else st.mcc = (diag * n - sum_rc) / std::sqrt(denom);
  return st;
}

struct RankAgreement {
  std::size_t rank = 0;  // 1 = most important
  std::string feature;
  double importance = 0.0;
  ImpactLabel self_label = ImpactLabel::neutral;
  ImpactLabel shap_label = ImpactLabel::neutral;
  bool agree = false;
};

struct AgreementReport {
  std::size_t n_features = 0;
  std::size_t n_agree = 0;
  double percent = 0.0;
  double kappa = 0.0;
  double mcc = 0.0;
  bool kappa_degenerate = false;
  bool mcc_degenerate = false;
  bool chance_level = false;  // kappa below 0.2
  std::size_t n_parse_failed = 0;
  std::size_t n_missing = 0;  // attributed features without a self-explanation record
  std::vector<RankAgreement> per_rank;
};

inline constexpr double chance_kappa_threshold = 0.2;

/// Compares self-reported impacts with attribution-derived labels over the
/// attributed features. `importance` aligns with `shap_labels.features`.
inline std::optional<AgreementReport> agreement(const std::vector<SelfExplanationRecord>& records,
                                                const ImpactLabelVector& shap_labels,
                                                std::span<const double> importance) {
  if (importance.size() != shap_labels.features.size())
    throw AuditError("agreement: importance must align with the labelled features");
  AgreementReport rep;
  std::vector<ImpactLabel> self, shap;
  std::vector<RankAgreement> rows;
  for (std::size_t j = 0; j < shap_labels.features.size(); ++j) {
    const auto& name = shap_labels.features[j];
    const auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.feature == name; });
    if (it == records.end()) {
      ++rep.n_missing;
      continue;
    }
    if (!it->parse_ok || !it->label) {
      ++rep.n_parse_failed;
      continue;
    }
    self.push_back(it->label->label);
    shap.push_back(shap_labels.labels[j]);
    rows.push_back({0, name, importance[j], it->label->label, shap_labels.labels[j], it->label->label == shap_labels.labels[j]});
  }
  const auto st = label_agreement(self, shap);
  if (!st) return std::nullopt;
  rep.n_features = st->n;
  rep.n_agree = st->n_agree;
  rep.percent = st->percent;
  rep.kappa = st->kappa;
  rep.mcc = st->mcc;
  rep.kappa_degenerate = st->kappa_degenerate;
  rep.mcc_degenerate = st->mcc_degenerate;
  rep.chance_level = st->kappa < chance_kappa_threshold;
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.importance > b.importance; });
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k].rank = k + 1;
  rep.per_rank = std::move(rows);
  return rep;
}

// ---------------------------------------------------------------------------
// Alignment between two attribution sources

/// Kendall tau-b; undefined with fewer than two items or when either side is
/// entirely tied.
inline std::optional<double> kendall_tau_b(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw AuditError("kendall_tau_b: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  double concordant = 0.0, discordant = 0.0, ties_a = 0.0, ties_b = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      if (da == 0.0) ties_a += 1.0;
      if (db == 0.0) ties_b += 1.0;
      if (da == 0.0 || db == 0.0) continue;
      ((da > 0) == (db > 0) ? concordant : discordant) += 1.0;
    }
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double denom = (pairs - ties_a) * (pairs - ties_b);
  if (denom <= 0.0) return std::nullopt;
  return (concordant - discordant) / std::sqrt(denom);
}

/// tau-b between two per-feature importance vectors.
inline std::optional<double> kendall_tau_importance(std::span<const double> a, std::span<const double> b) {
  return kendall_tau_b(a, b);
}

/// Percent of features whose three-way labels match exactly. Both vectors
/// must cover the same features (order may differ).
inline std::optional<double> dir_pct(const ImpactLabelVector& a, const ImpactLabelVector& b) {
  if (a.features.size() != b.features.size()) throw AuditError("dir_pct: feature sets differ");
  if (a.features.empty()) return std::nullopt;
  std::size_t match = 0;
  for (std::size_t i = 0; i < a.features.size(); ++i) {
    const auto j = b.index_of(a.features[i]);
    if (!j) throw AuditError("dir_pct: feature '" + a.features[i] + "' missing from the second vector");
    match += static_cast<std::size_t>(a.labels[i] == b.labels[*j]);
  }
  return 100.0 * static_cast<double>(match) / static_cast<double>(a.features.size());
}

struct AlignmentReport {
  std::optional<double> kendall_tau;
  std::optional<double> dir_pct;
  std::size_t n_features = 0;
  std::vector<std::string> features;
  std::vector<double> importance_a, importance_b;
  std::vector<ImpactLabel> labels_a, labels_b;
};

enum class DirectionRule { pearson_label, mean_sign };

/// Restricts both matrices to their common features (in `a`'s order) and
/// compares importance rankings (tau-b) and directional labels (Dir%).
inline AlignmentReport alignment(const ShapMatrix& a, const Dataset& data_a, const ShapMatrix& b,
                                 const Dataset& data_b, DirectionRule rule = DirectionRule::pearson_label) {
  auto restrict = [](const ShapMatrix& s, const std::vector<std::string>& keep) {
    ShapMatrix out = s;
    out.feature_names = keep;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      out.values[k].clear();
      for (const auto& f : keep) out.values[k].push_back(s.values[k][*s.feature_column(f)]);
    }
    return out;
  };
  std::vector<std::string> common;
  for (const auto& f : a.feature_names)
    if (b.feature_column(f)) common.push_back(f);
  const auto ra = restrict(a, common);
  const auto rb = restrict(b, common);

  AlignmentReport rep;
  rep.features = common;
  rep.n_features = common.size();
  rep.importance_a = ra.importance();
  rep.importance_b = rb.importance();
  rep.kendall_tau = kendall_tau_importance(rep.importance_a, rep.importance_b);
  const auto la = rule == DirectionRule::pearson_label ? impact_labels_from_shap(ra, data_a) : impact_labels_from_mean_sign(ra);
  const auto lb = rule == DirectionRule::pearson_label ? impact_labels_from_shap(rb, data_b) : impact_labels_from_mean_sign(rb);
  rep.labels_a = la.labels;
  rep.labels_b = lb.labels;
  rep.dir_pct = dir_pct(la, lb);
  return rep;
}

}  // namespace llmaudit

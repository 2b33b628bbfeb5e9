#pragma once

#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "llmaudit/attribution.hpp"
#include "llmaudit/csv.hpp"
#include "llmaudit/digest.hpp"
#include "llmaudit/keyvalue.hpp"
#include "llmaudit/random.hpp"
#include "llmaudit/shap_io.hpp"
#include "llmaudit/tabular.hpp"

namespace llmaudit {

/// SHA-256 over the schema text and every row (exact number rendering).
inline std::string dataset_digest(const Dataset& d) {
  std::string buf = format_schema(d);
  for (std::size_t r = 0; r < d.row_count(); ++r) {
    csv::Row row;
    for (const auto& c : d.rows[r])
      row.push_back(c.missing() ? "" : c.is_number() ? text::exact(c.as_number()) : c.as_category());
    row.push_back(std::to_string(d.labels[r]));
    buf += csv::format_row(row);
  }
  return sha256_hex(buf);
}

/// Logistic regression on standardized numeric features. Missing cells are
/// imputed with the training mean (0 after standardization).
struct SurrogateModel {
  std::vector<std::string> features;  // numeric features, schema order
  std::vector<double> weights;        // standardized space
  double bias = 0.0;
  std::vector<double> means;
  std::vector<double> scales;  // 1 for unused features
  std::vector<bool> used;      // false for zero-variance columns
  std::string trained_on;
  std::vector<double> loss_history;  // log-loss before each update, then the final loss
  std::vector<std::string> warnings;

  [[nodiscard]] double standardized(std::size_t j, const Cell& c) const {
    if (!used[j] || !c.is_number()) return 0.0;
    return (c.as_number() - means[j]) / scales[j];
  }

  /// Log-odds for a full-width dataset row.
  [[nodiscard]] double log_odds(const Dataset& d, std::size_t row) const {
    double z = bias;
    for (std::size_t j = 0; j < features.size(); ++j)
      z += weights[j] * standardized(j, d.rows[row][*d.feature_index(features[j])]);
    return z;
  }

  [[nodiscard]] double probability(const Dataset& d, std::size_t row) const {
    return 1.0 / (1.0 + std::exp(-log_odds(d, row)));
  }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["features"] = features;
    j["weights"] = weights;
    j["bias"] = bias;
    j["means"] = means;
    j["scales"] = scales;
    j["used"] = used;
    j["trained_on"] = trained_on;
    return j;
  }

  static SurrogateModel from_json(const nlohmann::json& j) {
    SurrogateModel m;
    try {
      m.features = j.at("features").get<std::vector<std::string>>();
      m.weights = j.at("weights").get<std::vector<double>>();
      m.bias = j.at("bias").get<double>();
      m.means = j.at("means").get<std::vector<double>>();
      m.scales = j.at("scales").get<std::vector<double>>();
      m.used = j.at("used").get<std::vector<bool>>();
      m.trained_on = j.value("trained_on", std::string());
    } catch (const nlohmann::json::exception& e) {
      throw AuditError(std::string("surrogate: malformed model document: ") + e.what());
    }
    const auto n = m.features.size();
    if (m.weights.size() != n || m.means.size() != n || m.scales.size() != n || m.used.size() != n)
      throw AuditError("surrogate: per-feature arrays differ in length");
    for (std::size_t i = 0; i < n; ++i)
      if (!(m.scales[i] > 0.0)) throw AuditError("surrogate: scale of '" + m.features[i] + "' must be positive");
    return m;
  }
};

inline void save_surrogate(const SurrogateModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw AuditError("cannot write '" + path + "'");
  out << m.to_json().dump(2) << '\n';
}

inline SurrogateModel load_surrogate(const std::string& path) {
  auto j = nlohmann::json::parse(kv::read_text(path), nullptr, false);
  if (j.is_discarded()) throw AuditError("surrogate: '" + path + "' is not JSON");
  return SurrogateModel::from_json(j);
}

namespace detail {
inline double log_loss(std::span<const double> z, std::span<const int> y) {
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    // log(1 + e^z) - y z, stable for large |z|
    const double softplus = z[i] > 0 ? z[i] + std::log1p(std::exp(-z[i])) : std::log1p(std::exp(z[i]));
    loss += softplus - y[i] * z[i];
  }
  return loss / static_cast<double>(z.size());
}
}  // namespace detail

inline constexpr double default_surrogate_step = 0.5;

/// Full-batch gradient descent on mean log-loss. Weights start at small
/// seeded values; categorical features are ignored.
inline SurrogateModel fit_logistic_surrogate(const Dataset& d, std::size_t epochs = 500,
                                             double learning_rate = default_surrogate_step, std::uint64_t seed = 0) {
  const auto positives = static_cast<std::size_t>(std::count(d.labels.begin(), d.labels.end(), 1));
  if (positives == 0 || positives == d.labels.size()) throw AuditError("surrogate: both classes must be present");
  if (!(learning_rate > 0.0)) throw AuditError("surrogate: learning rate must be positive");

  SurrogateModel m;
  m.trained_on = dataset_digest(d);
  const auto numeric = d.numeric_features();
  const std::size_t n = d.row_count();
  for (auto f : numeric) {
    const auto col = d.numeric_column(f);
    double sum = 0.0, count = 0.0;
    for (double v : col)
      if (!std::isnan(v)) { sum += v; count += 1.0; }
    const double mean = count > 0 ? sum / count : 0.0;
    double ss = 0.0;
    for (double v : col)
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    const double sd = count > 0 ? std::sqrt(ss / count) : 0.0;
    m.features.push_back(d.schema[f].name);
    m.means.push_back(mean);
    const bool usable = sd > 0.0 && std::isfinite(sd);
    m.used.push_back(usable);
    m.scales.push_back(usable ? sd : 1.0);
    if (!usable) m.warnings.push_back("surrogate: dropped zero-variance feature '" + d.schema[f].name + "'");
  }

  const std::size_t p = numeric.size();
  std::vector<std::vector<double>> x(n, std::vector<double>(p));
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < p; ++j) x[r][j] = m.standardized(j, d.rows[r][numeric[j]]);

  Rng rng(seed);
  m.weights.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) m.weights[j] = m.used[j] ? 1e-3 * standard_normal(rng) : 0.0;

  std::vector<double> z(n);
  auto scores = [&] {
    for (std::size_t r = 0; r < n; ++r) z[r] = linear_score(m.bias, m.weights, x[r]);
  };
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t e = 0; e < epochs; ++e) {
    scores();
    m.loss_history.push_back(detail::log_loss(z, d.labels));
    std::vector<double> grad(p, 0.0);
    double grad_b = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double residual = 1.0 / (1.0 + std::exp(-z[r])) - d.labels[r];
      grad_b += residual;
      for (std::size_t j = 0; j < p; ++j) grad[j] += residual * x[r][j];
    }
    m.bias -= learning_rate * grad_b * inv_n;
    for (std::size_t j = 0; j < p; ++j)
      if (m.used[j]) m.weights[j] -= learning_rate * grad[j] * inv_n;
  }
  scores();
  m.loss_history.push_back(detail::log_loss(z, d.labels));
  return m;
}

/// Closed-form log-odds attributions phi_j = w_j (x_j - mean_j) / scale_j;
/// base value is the bias (the score at the training means).
inline ShapMatrix surrogate_shap(const SurrogateModel& m, const Dataset& d, std::span<const std::size_t> rows) {
  std::vector<std::size_t> cols;
  for (const auto& f : m.features) {
    const auto idx = d.feature_index(f);
    if (!idx || d.schema[*idx].kind != FeatureKind::numeric)
      throw AuditError("surrogate_shap: dataset lacks numeric feature '" + f + "'");
    cols.push_back(*idx);
  }
  ShapMatrix s;
  s.feature_names = m.features;
  s.explainer = Explainer::linear;
  s.provenance = "logistic surrogate trained on " + m.trained_on;
  for (auto row : rows) {
    if (row >= d.row_count()) throw AuditError("surrogate_shap: row " + std::to_string(row) + " out of range");
    std::vector<double> x(cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) x[j] = m.standardized(j, d.rows[row][cols[j]]);
    const std::vector<double> zeros(cols.size(), 0.0);
    auto phi = linear_shap(m.weights, zeros, x);
    s.predictions.push_back(linear_score(m.bias, m.weights, x));
    s.values.push_back(std::move(phi));
    s.base_values.push_back(m.bias);
    s.instance_ids.push_back(row);
  }
  finalize_base_value(s);
  return s;
}

/// Reads an attribution matrix in the export format and checks it against
/// the dataset: every feature numeric and known, every instance id a row.
inline ShapMatrix import_external_shap(const std::string& path, const Dataset& d) {
  ShapMatrix s = read_shap_matrix(path);
  for (const auto& f : s.feature_names) {
    const auto idx = d.feature_index(f);
    if (!idx) throw AuditError("attribution import: unknown feature '" + f + "'");
    if (d.schema[*idx].kind != FeatureKind::numeric)
      throw AuditError("attribution import: feature '" + f + "' is not numeric");
  }
  for (auto id : s.instance_ids)
    if (id >= d.row_count())
      throw AuditError("attribution import: instance id " + std::to_string(id) + " is not a dataset row");
  return s;
}

}  // namespace llmaudit

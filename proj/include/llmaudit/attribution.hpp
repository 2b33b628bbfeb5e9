#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <limits>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "llmaudit/digest.hpp"
#include "llmaudit/errors.hpp"
#include "llmaudit/predictor.hpp"
#include "llmaudit/promptgen.hpp"
#include "llmaudit/random.hpp"
#include "llmaudit/tabular.hpp"

namespace llmaudit {

// ---------------------------------------------------------------------------
// Background summarization

struct BackgroundSet {
  enum class Source { kmeans, explicit_rows };
  std::vector<std::vector<Cell>> rows;  // full schema width
  std::vector<double> weights;          // non-negative, sum to 1
  Source source = Source::explicit_rows;
  std::vector<std::string> warnings;

  [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }

  static BackgroundSet from_rows(std::vector<std::vector<Cell>> rows, std::vector<double> weights = {}) {
    if (rows.empty()) throw AuditError("background: at least one row required");
    BackgroundSet bg;
    bg.rows = std::move(rows);
    if (weights.empty()) weights.assign(bg.rows.size(), 1.0);
    if (weights.size() != bg.rows.size()) throw AuditError("background: one weight per row required");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw AuditError("background: weights must be non-negative");
      total += w;
    }
    if (total <= 0.0) throw AuditError("background: weights sum to zero");
    for (double& w : weights) w /= total;
    bg.weights = std::move(weights);
    return bg;
  }
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::size_t nearest(std::span<const double> point, const std::vector<std::vector<double>>& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double dist = squared_distance(point, centers[c]);
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

/// k-means summary of the dataset's numeric columns (raw units). Seeded
/// farthest-point initialization, Lloyd iterations to an assignment fixpoint
/// (at most 100), numeric centroid cells snapped to the nearest observed
/// column value, categorical cells copied from the row nearest the centroid.
/// Weights are cluster sizes / n, or uniform when `weighted` is false.
inline BackgroundSet kmeans_background(const Dataset& d, std::size_t clusters, std::uint64_t seed,
                                       bool weighted = true) {
  const std::size_t n = d.row_count();
  if (clusters == 0) throw AuditError("kmeans_background: C must be >= 1");
  if (clusters > n)
    throw AuditError("kmeans_background: C=" + std::to_string(clusters) + " exceeds row count " + std::to_string(n));

  const auto numeric = d.numeric_features();
  const std::size_t dim = numeric.size();

  // Points with missing cells imputed by the column mean.
  std::vector<std::vector<double>> points(n, std::vector<double>(dim));
  std::vector<std::vector<double>> observed(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const auto col = d.numeric_column(numeric[k]);
    double sum = 0.0;
    std::size_t count = 0;
    for (double v : col)
      if (!std::isnan(v)) { sum += v; ++count; observed[k].push_back(v); }
    const double mean = count ? sum / static_cast<double>(count) : 0.0;
    for (std::size_t r = 0; r < n; ++r) points[r][k] = std::isnan(col[r]) ? mean : col[r];
    std::sort(observed[k].begin(), observed[k].end());
    observed[k].erase(std::unique(observed[k].begin(), observed[k].end()), observed[k].end());
  }

  BackgroundSet bg;
  bg.source = BackgroundSet::Source::kmeans;
  std::vector<std::vector<double>> centers;
  std::vector<std::size_t> sizes;

  std::map<std::vector<double>, std::size_t> distinct;  // point -> multiplicity
  for (const auto& p : points) ++distinct[p];

  if (clusters > distinct.size()) {
    bg.warnings.push_back("kmeans_background: C=" + std::to_string(clusters) + " exceeds " +
                          std::to_string(distinct.size()) + " distinct rows; using the distinct rows");
    std::set<std::vector<double>> seen;
    for (const auto& p : points) {
      if (!seen.insert(p).second) continue;
      centers.push_back(p);
      sizes.push_back(distinct[p]);
    }
  } else {
    Rng rng(seed);
    std::vector<std::size_t> chosen{static_cast<std::size_t>(uniform_index(rng, n))};
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    centers.push_back(points[chosen.back()]);
    while (centers.size() < clusters) {
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t r = 0; r < n; ++r) {
        min_dist[r] = std::min(min_dist[r], detail::squared_distance(points[r], centers.back()));
        if (min_dist[r] > far_d) {
          far_d = min_dist[r];
          far = r;
        }
      }
      centers.push_back(points[far]);
    }

    std::vector<std::size_t> assignment(n, clusters);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (std::size_t r = 0; r < n; ++r) {
        const auto c = detail::nearest(points[r], centers);
        if (c != assignment[r]) {
          assignment[r] = c;
          changed = true;
        }
      }
      if (!changed) break;
      std::vector<std::vector<double>> sums(clusters, std::vector<double>(dim, 0.0));
      std::vector<std::size_t> counts(clusters, 0);
      for (std::size_t r = 0; r < n; ++r) {
        ++counts[assignment[r]];
        for (std::size_t k = 0; k < dim; ++k) sums[assignment[r]][k] += points[r][k];
      }
      for (std::size_t c = 0; c < clusters; ++c)
        if (counts[c])  // an empty cluster keeps its previous center
          for (std::size_t k = 0; k < dim; ++k) centers[c][k] = sums[c][k] / static_cast<double>(counts[c]);
    }
    sizes.assign(clusters, 0);
    for (auto a : assignment) ++sizes[a];
  }

  for (std::size_t c = 0; c < centers.size(); ++c) {
    // Row nearest the unsnapped center supplies the categorical cells.
    std::size_t nearest_row = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < n; ++r) {
      const double dist = detail::squared_distance(points[r], centers[c]);
      if (dist < best) {
        best = dist;
        nearest_row = r;
      }
    }
    std::vector<Cell> row = d.rows[nearest_row];
    for (std::size_t k = 0; k < dim; ++k) {
      const auto& values = observed[k];
      if (values.empty()) {
        row[numeric[k]] = Cell{};
        continue;
      }
      const double target = centers[c][k];
      auto it = std::lower_bound(values.begin(), values.end(), target);
      double snapped = it == values.end() ? values.back() : *it;
      if (it != values.begin() && (it == values.end() || target - *std::prev(it) <= *it - target))
        snapped = *std::prev(it);
      row[numeric[k]] = Cell::number(snapped);
    }
    bg.rows.push_back(std::move(row));
    bg.weights.push_back(weighted ? static_cast<double>(sizes[c]) / static_cast<double>(n)
                                  : 1.0 / static_cast<double>(centers.size()));
  }
  return bg;
}

// ---------------------------------------------------------------------------
// Cost planning

enum class WalkMode { forward, antithetic };

inline const char* to_string(WalkMode m) { return m == WalkMode::forward ? "forward" : "antithetic"; }

struct CostPlan {
  std::uint64_t instances = 0;          // K
  std::uint64_t features = 0;           // M
  std::uint64_t background_rows = 0;    // B
  std::uint64_t centroids = 0;          // C
  std::uint64_t max_evals = 0;
  std::uint64_t permutations = 0;       // T = floor(max_evals / 2M)
  std::uint64_t coalitions_per_permutation = 0;  // M+1 forward, 2M+1 antithetic
  std::uint64_t per_instance_calls = 0;  // T * coalitions * B
  std::uint64_t total_calls = 0;         // K * per_instance_calls
  std::uint64_t kernel_per_instance = 0;  // C * M^2
  double speedup = 0.0;                   // kernel_per_instance / per_instance_calls
  WalkMode mode = WalkMode::forward;
};

inline CostPlan plan_cost(std::uint64_t instances, std::uint64_t features, std::uint64_t background_rows,
                          std::uint64_t centroids, std::uint64_t max_evals, WalkMode mode = WalkMode::forward) {
  if (features < 1) throw AuditError("plan_cost: at least one explainable feature required");
  if (instances < 1 || background_rows < 1 || centroids < 1)
    throw AuditError("plan_cost: K, B and C must be positive");
  if (max_evals < 2 * features)
    throw AuditError("plan_cost: max_evals=" + std::to_string(max_evals) + " gives zero permutations; minimum is " +
                     std::to_string(2 * features) + " (2M)");
  CostPlan p;
  p.instances = instances;
  p.features = features;
  p.background_rows = background_rows;
  p.centroids = centroids;
  p.max_evals = max_evals;
  p.mode = mode;
  p.permutations = max_evals / (2 * features);
  p.coalitions_per_permutation = mode == WalkMode::forward ? features + 1 : 2 * features + 1;
  p.per_instance_calls = p.permutations * p.coalitions_per_permutation * background_rows;
  p.total_calls = instances * p.per_instance_calls;
  p.kernel_per_instance = centroids * features * features;
  p.speedup = static_cast<double>(p.kernel_per_instance) / static_cast<double>(p.per_instance_calls);
  return p;
}

// ---------------------------------------------------------------------------
// Generic Shapley estimators over a coalition game

/// Membership of each explained feature; index k refers to the k-th explained feature.
using Coalition = std::vector<bool>;

/// Evaluates v(S) for a batch of coalitions, or returns nullopt on failure.
template <typename F>
concept CoalitionGame = requires(F f, std::span<const Coalition> batch) {
  { f(batch) } -> std::convertible_to<std::optional<std::vector<double>>>;
};

enum class PermutationSampling { random, exhaustive };

struct WalkOptions {
  std::size_t permutations = 1;  // ignored under exhaustive sampling
  std::uint64_t seed = 0;
  WalkMode mode = WalkMode::forward;
  PermutationSampling sampling = PermutationSampling::random;
  bool coalition_cache = true;  // evaluate identical coalitions once per instance
};

struct ShapleyEstimate {
  std::vector<double> phi;
  double base_value = 0.0;  // v(empty)
  double full_value = 0.0;  // v(all)
  std::size_t coalitions_evaluated = 0;
  std::size_t permutations = 0;
};

inline std::uint64_t factorial(std::size_t m) {
  std::uint64_t f = 1;
  for (std::size_t i = 2; i <= m; ++i) f *= i;
  return f;
}

/// Permutation estimator: each walk moves from the empty coalition to the
/// full one along a feature ordering and credits every newly added feature
/// with the change in value. Antithetic walks then remove features in the
/// same order back to empty. Accumulation follows (permutation, step) order.
template <CoalitionGame Game>
std::optional<ShapleyEstimate> permutation_shapley(std::size_t m, Game&& game, const WalkOptions& opt) {
  if (m == 0) throw AuditError("permutation_shapley: no features");
  std::vector<std::vector<std::size_t>> orders;
  if (opt.sampling == PermutationSampling::exhaustive) {
    if (m > 8) throw AuditError("permutation_shapley: exhaustive sampling limited to M <= 8");
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do orders.push_back(perm);
    while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    if (opt.permutations == 0) throw AuditError("permutation_shapley: at least one permutation required");
    Rng rng(opt.seed);
    for (std::size_t t = 0; t < opt.permutations; ++t) orders.push_back(random_permutation(m, rng));
  }

  // Lay out every walk as a list of coalition slots.
  std::vector<Coalition> unique;
  std::map<Coalition, std::size_t> slot_of;
  std::vector<std::vector<std::size_t>> walk_slots;
  auto slot = [&](const Coalition& c) {
    if (opt.coalition_cache) {
      if (auto it = slot_of.find(c); it != slot_of.end()) return it->second;
      slot_of.emplace(c, unique.size());
    }
    unique.push_back(c);
    return unique.size() - 1;
  };
  for (const auto& order : orders) {
    std::vector<std::size_t> slots;
    Coalition c(m, false);
    slots.push_back(slot(c));
    for (auto f : order) {
      c[f] = true;
      slots.push_back(slot(c));
    }
    if (opt.mode == WalkMode::antithetic) {
      for (auto f : order) {
        c[f] = false;
        slots.push_back(slot(c));
      }
    }
    walk_slots.push_back(std::move(slots));
  }

  const auto values = game(std::span<const Coalition>(unique));
  if (!values) return std::nullopt;
  if (values->size() != unique.size()) throw AuditError("permutation_shapley: game returned wrong batch size");

  ShapleyEstimate est;
  est.phi.assign(m, 0.0);
  est.coalitions_evaluated = unique.size();
  est.permutations = orders.size();
  for (std::size_t t = 0; t < orders.size(); ++t) {
    const auto& s = walk_slots[t];
    for (std::size_t k = 0; k < m; ++k) est.phi[orders[t][k]] += (*values)[s[k + 1]] - (*values)[s[k]];
    if (opt.mode == WalkMode::antithetic)
      for (std::size_t k = 0; k < m; ++k) est.phi[orders[t][k]] += (*values)[s[m + k]] - (*values)[s[m + k + 1]];
  }
  const double walks = static_cast<double>(orders.size()) * (opt.mode == WalkMode::antithetic ? 2.0 : 1.0);
  for (double& p : est.phi) p /= walks;
  est.base_value = (*values)[walk_slots.front().front()];
  est.full_value = (*values)[walk_slots.front()[m]];
  return est;
}

/// Classical Shapley value by enumerating all 2^M coalitions:
/// phi_i = sum_{S not containing i} |S|!(M-|S|-1)!/M! [v(S+i) - v(S)].
template <CoalitionGame Game>
std::optional<ShapleyEstimate> exact_shapley(std::size_t m, Game&& game) {
  if (m == 0) throw AuditError("exact_shapley: no features");
  if (m > 12) throw AuditError("exact_shapley: M=" + std::to_string(m) + " exceeds the 12-feature limit");
  const std::size_t count = std::size_t{1} << m;
  std::vector<Coalition> all(count, Coalition(m, false));
  for (std::size_t mask = 0; mask < count; ++mask)
    for (std::size_t i = 0; i < m; ++i) all[mask][i] = (mask >> i) & 1U;
  const auto values = game(std::span<const Coalition>(all));
  if (!values) return std::nullopt;

  std::vector<double> weight(m);  // by |S|
  const double m_fact = static_cast<double>(factorial(m));
  for (std::size_t s = 0; s < m; ++s)
    weight[s] = static_cast<double>(factorial(s)) * static_cast<double>(factorial(m - s - 1)) / m_fact;

  ShapleyEstimate est;
  est.phi.assign(m, 0.0);
  est.coalitions_evaluated = count;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t mask = 0; mask < count; ++mask) {
      if ((mask >> i) & 1U) continue;
      const auto size = static_cast<std::size_t>(std::popcount(mask));
      est.phi[i] += weight[size] * ((*values)[mask | (std::size_t{1} << i)] - (*values)[mask]);
    }
  }
  est.base_value = values->front();
  est.full_value = values->back();
  return est;
}

// ---------------------------------------------------------------------------
// Attribution matrices

enum class Explainer { permutation, exact, linear, external };

inline const char* to_string(Explainer e) {
  switch (e) {
    case Explainer::permutation: return "permutation";
    case Explainer::exact: return "exact";
    case Explainer::linear: return "linear";
    case Explainer::external: break;
  }
  return "external";
}

inline Explainer parse_explainer(std::string_view s) {
  if (s == "permutation") return Explainer::permutation;
  if (s == "exact") return Explainer::exact;
  if (s == "linear") return Explainer::linear;
  if (s == "external") return Explainer::external;
  throw AuditError("unknown explainer '" + std::string(s) + "'");
}

struct DroppedInstance {
  std::size_t row = 0;
  std::string reason;
  friend bool operator==(const DroppedInstance&, const DroppedInstance&) = default;
};

/// Per-(instance, feature) attributions. `base_values[k]` is v(empty) for
/// instance k (categorical cells stay at the instance's own values, so it can
/// differ per instance); `base_value` is their mean. `predictions[k]` is the
/// value of the full coalition, i.e. the model output being explained.
struct ShapMatrix {
  std::vector<std::vector<double>> values;  // K x M
  double base_value = 0.0;
  std::vector<double> base_values;
  std::vector<double> predictions;
  std::vector<std::size_t> instance_ids;
  std::vector<std::string> feature_names;
  Explainer explainer = Explainer::permutation;
  std::uint64_t seed = 0;
  std::uint64_t max_evals = 0;
  std::string provenance;
  std::vector<DroppedInstance> dropped;

  [[nodiscard]] std::optional<std::size_t> feature_column(std::string_view name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i)
      if (feature_names[i] == name) return i;
    return std::nullopt;
  }

  /// Mean |phi| per feature across explained instances.
  [[nodiscard]] std::vector<double> importance() const {
    std::vector<double> imp(feature_names.size(), 0.0);
    if (values.empty()) return imp;
    for (const auto& row : values)
      for (std::size_t j = 0; j < row.size(); ++j) imp[j] += std::abs(row[j]);
    for (double& v : imp) v /= static_cast<double>(values.size());
    return imp;
  }

  friend bool operator==(const ShapMatrix&, const ShapMatrix&) = default;
};

inline void finalize_base_value(ShapMatrix& s) {
  s.base_value = 0.0;
  if (s.base_values.empty()) return;
  for (double b : s.base_values) s.base_value += b;
  s.base_value /= static_cast<double>(s.base_values.size());
}

struct ExplainerOptions {
  std::uint64_t max_evals = 200;
  std::uint64_t seed = 0;
  WalkMode mode = WalkMode::forward;
  PermutationSampling sampling = PermutationSampling::random;
  bool coalition_cache = true;
  bool weighted_background = true;
  SerializationVariant variant;
  const PromptTemplates* templates = nullptr;
  Phase phase = Phase::attribution;
};

namespace detail {

/// v(S) for one instance: weighted mean over background rows of the model's
/// prediction on the prompt where explained features outside S take the
/// background row's value.
class MaskedInstanceGame {
public:
  MaskedInstanceGame(Predictor& predictor, const Dataset& d, std::size_t row, const BackgroundSet& bg,
                     std::vector<std::size_t> explained, const ExplainerOptions& opt)
      : predictor_(predictor), d_(d), row_(row), bg_(bg), explained_(std::move(explained)), opt_(opt) {}

  std::optional<std::vector<double>> operator()(std::span<const Coalition> batch) {
    const std::size_t b_count = bg_.size();
    std::vector<PredictRequest> requests;
    requests.reserve(batch.size() * b_count);
    for (const auto& coalition : batch) {
      for (std::size_t b = 0; b < b_count; ++b) {
        std::vector<std::optional<Cell>> repl(d_.feature_count());
        std::string mask_desc;
        for (std::size_t k = 0; k < explained_.size(); ++k) {
          if (coalition[k]) continue;
          const auto f = explained_[k];
          repl[f] = bg_.rows[b][f];
          mask_desc += std::to_string(f) + "=" +
                       (repl[f]->missing() ? std::string("?") : text::exact(repl[f]->as_number())) + ";";
        }
        PredictRequest req;
        req.prompt = render_instance_prompt(d_, row_, opt_.variant, repl,
                                            opt_.templates ? *opt_.templates : PromptTemplates::defaults());
        req.phase = opt_.phase;
        req.row = row_;
        req.mask_digest = mask_desc.empty() ? std::string() : sha256_hex(mask_desc);
        requests.push_back(std::move(req));
      }
    }
    auto outcomes = predictor_.predict_batch(requests);
    std::vector<double> weights = bg_.weights;
    if (!opt_.weighted_background) weights.assign(b_count, 1.0 / static_cast<double>(b_count));
    std::vector<double> values(batch.size(), 0.0);
    for (std::size_t c = 0; c < batch.size(); ++c) {
      for (std::size_t b = 0; b < b_count; ++b) {
        const auto& o = outcomes[c * b_count + b];
        if (!o) {
          failure_ = std::string(to_string(o.error().kind)) + ": " + o.error().message;
          return std::nullopt;
        }
        values[c] += weights[b] * o.value().probability;
      }
    }
    return values;
  }

  [[nodiscard]] const std::string& failure() const noexcept { return failure_; }

private:
  Predictor& predictor_;
  const Dataset& d_;
  std::size_t row_;
  const BackgroundSet& bg_;
  std::vector<std::size_t> explained_;
  const ExplainerOptions& opt_;
  std::string failure_;
};

inline ShapMatrix empty_matrix(const Dataset& d, const std::vector<std::size_t>& explained, Explainer e,
                               const ExplainerOptions& opt) {
  ShapMatrix s;
  for (auto f : explained) s.feature_names.push_back(d.schema[f].name);
  s.explainer = e;
  s.seed = opt.seed;
  s.max_evals = opt.max_evals;
  return s;
}

}  // namespace detail

/// Permutation explainer over the numeric features of `rows`. Categorical
/// features always keep the instance's own value. Instances whose predictions
/// fail are dropped and listed in `dropped`.
inline ShapMatrix permutation_shap(Predictor& predictor, const Dataset& d, std::span<const std::size_t> rows,
                                   const BackgroundSet& bg, const ExplainerOptions& opt = {}) {
  const auto explained = d.numeric_features();
  if (explained.empty()) throw AuditError("permutation_shap: dataset has no numeric features to explain");
  const auto plan = plan_cost(std::max<std::size_t>(rows.size(), 1), explained.size(), bg.size(), bg.size(),
                              opt.max_evals, opt.mode);

  ShapMatrix s = detail::empty_matrix(d, explained, Explainer::permutation, opt);
  for (const auto row : rows) {
    if (row >= d.row_count()) throw AuditError("permutation_shap: row " + std::to_string(row) + " out of range");
    WalkOptions walk;
    walk.permutations = plan.permutations;
    walk.seed = derive_seed(opt.seed, row);
    walk.mode = opt.mode;
    walk.sampling = opt.sampling;
    walk.coalition_cache = opt.coalition_cache;
    detail::MaskedInstanceGame game(predictor, d, row, bg, explained, opt);
    auto est = permutation_shapley(explained.size(), game, walk);
    if (!est) {
      s.dropped.push_back({row, game.failure()});
      continue;
    }
    s.values.push_back(std::move(est->phi));
    s.base_values.push_back(est->base_value);
    s.predictions.push_back(est->full_value);
    s.instance_ids.push_back(row);
  }
  finalize_base_value(s);
  return s;
}

/// Brute-force Shapley values for one row (M <= 12 numeric features).
inline ShapMatrix exact_shap_bruteforce(Predictor& predictor, const Dataset& d, std::size_t row,
                                        const BackgroundSet& bg, const ExplainerOptions& opt = {}) {
  const auto explained = d.numeric_features();
  if (explained.empty()) throw AuditError("exact_shap_bruteforce: dataset has no numeric features");
  if (explained.size() > 12)
    throw AuditError("exact_shap_bruteforce: M=" + std::to_string(explained.size()) + " exceeds the 12-feature limit");
  ShapMatrix s = detail::empty_matrix(d, explained, Explainer::exact, opt);
  s.max_evals = 0;
  detail::MaskedInstanceGame game(predictor, d, row, bg, explained, opt);
  auto est = exact_shapley(explained.size(), game);
  if (!est) {
    s.dropped.push_back({row, game.failure()});
    return s;
  }
  s.values.push_back(std::move(est->phi));
  s.base_values.push_back(est->base_value);
  s.predictions.push_back(est->full_value);
  s.instance_ids.push_back(row);
  finalize_base_value(s);
  return s;
}

/// Exact oracle applied row by row.
inline ShapMatrix exact_shap_rows(Predictor& predictor, const Dataset& d, std::span<const std::size_t> rows,
                                  const BackgroundSet& bg, const ExplainerOptions& opt = {}) {
  ShapMatrix out = detail::empty_matrix(d, d.numeric_features(), Explainer::exact, opt);
  out.max_evals = 0;
  for (auto row : rows) {
    auto one = exact_shap_bruteforce(predictor, d, row, bg, opt);
    if (one.values.empty()) {
      out.dropped.insert(out.dropped.end(), one.dropped.begin(), one.dropped.end());
      continue;
    }
    out.values.push_back(one.values.front());
    out.base_values.push_back(one.base_values.front());
    out.predictions.push_back(one.predictions.front());
    out.instance_ids.push_back(row);
  }
  finalize_base_value(out);
  return out;
}

// ---------------------------------------------------------------------------
// Closed forms and views

/// phi_i = w_i (x_i - mean_i) for a linear score; the base is the score at the means.
inline std::vector<double> linear_shap(std::span<const double> weights, std::span<const double> means,
                                       std::span<const double> row) {
  if (weights.size() != means.size() || weights.size() != row.size())
    throw AuditError("linear_shap: weights, means and row must have equal length");
  std::vector<double> phi(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) phi[i] = weights[i] * (row[i] - means[i]);
  return phi;
}

inline double linear_score(double bias, std::span<const double> weights, std::span<const double> x) {
  double s = bias;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x[i];
  return s;
}

/// (feature value, attribution) per explained instance, for dependence plots.
/// Missing feature values come back as NaN.
inline std::vector<std::pair<double, double>> dependence_data(const ShapMatrix& s, const Dataset& d,
                                                              std::string_view feature) {
  const auto col = s.feature_column(feature);
  const auto f = d.feature_index(feature);
  if (!col || !f) throw AuditError("dependence_data: unknown feature '" + std::string(feature) + "'");
  std::vector<std::pair<double, double>> out;
  out.reserve(s.instance_ids.size());
  for (std::size_t k = 0; k < s.instance_ids.size(); ++k) {
    const auto& cell = d.rows.at(s.instance_ids[k])[*f];
    out.emplace_back(cell.is_number() ? cell.as_number() : std::nan(""), s.values[k][*col]);
  }
  return out;
}

}  // namespace llmaudit

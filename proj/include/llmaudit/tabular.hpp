#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "llmaudit/csv.hpp"
#include "llmaudit/errors.hpp"
#include "llmaudit/keyvalue.hpp"
#include "llmaudit/random.hpp"
#include "llmaudit/text.hpp"

namespace llmaudit {

enum class FeatureKind { numeric, categorical };

inline const char* to_string(FeatureKind k) { return k == FeatureKind::numeric ? "numeric" : "categorical"; }

struct FeatureSchema {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  std::optional<std::string> description;
  std::vector<std::string> categories;  // categorical only
  std::optional<std::string> units;
};

/// A numeric value, a category token, or missing.
class Cell {
public:
  Cell() = default;
  static Cell number(double v) { Cell c; c.value_ = v; return c; }
  static Cell category(std::string token) { Cell c; c.value_ = std::move(token); return c; }

  [[nodiscard]] bool missing() const noexcept { return std::holds_alternative<std::monostate>(value_); }
  [[nodiscard]] bool is_number() const noexcept { return std::holds_alternative<double>(value_); }
  [[nodiscard]] bool is_category() const noexcept { return std::holds_alternative<std::string>(value_); }
  [[nodiscard]] double as_number() const { return std::get<double>(value_); }
  [[nodiscard]] const std::string& as_category() const { return std::get<std::string>(value_); }

  friend bool operator==(const Cell& a, const Cell& b) {
    if (a.is_number() && b.is_number())  // bitwise, so -0.0 != 0.0 and round trips are exact
      return std::signbit(a.as_number()) == std::signbit(b.as_number()) && a.as_number() == b.as_number();
    return a.value_ == b.value_;
  }

private:
  std::variant<std::monostate, double, std::string> value_;
};

struct Dataset {
  std::vector<FeatureSchema> schema;
  std::vector<std::vector<Cell>> rows;
  std::vector<int> labels;
  std::string label_column = "label";
  std::string positive_class_name;
  std::string task_description;
  std::string task_name;

  [[nodiscard]] std::size_t feature_count() const noexcept { return schema.size(); }
  [[nodiscard]] std::size_t row_count() const noexcept { return rows.size(); }

  [[nodiscard]] std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (schema[i].name == name) return i;
    return std::nullopt;
  }

  /// Schema positions of numeric features; these are the explainable ones.
  [[nodiscard]] std::vector<std::size_t> numeric_features() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < schema.size(); ++i)
      if (schema[i].kind == FeatureKind::numeric) out.push_back(i);
    return out;
  }

  [[nodiscard]] double prevalence() const {
    if (labels.empty()) return 0.0;
    std::size_t positives = 0;
    for (int y : labels) positives += static_cast<std::size_t>(y == 1);
    return static_cast<double>(positives) / static_cast<double>(labels.size());
  }

  /// Numeric column values; missing cells become NaN.
  [[nodiscard]] std::vector<double> numeric_column(std::size_t feature) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows)
      out.push_back(r[feature].is_number() ? r[feature].as_number() : std::nan(""));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Schema file

/// Task-level texts plus the ordered feature list read from a schema file.
struct SchemaDocument {
  std::vector<FeatureSchema> features;
  std::string label_column;
  std::string positive_class_name;
  std::string task_description;
  std::string task_name;
};

inline void validate_schema(const std::vector<FeatureSchema>& features) {
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name.empty()) throw AuditError("schema: feature with empty name");
    if (!seen.insert(f.name).second) throw AuditError("schema: duplicate feature name '" + f.name + "'");
    if (f.kind == FeatureKind::categorical && f.categories.empty())
      throw AuditError("schema: categorical feature '" + f.name + "' has no categories");
    if (f.kind == FeatureKind::numeric && !f.categories.empty())
      throw AuditError("schema: numeric feature '" + f.name + "' must not list categories");
  }
}

/// Schema files are key-value documents:
///
///     label_column = bankrupt
///     positive_class = Bankruptcy
///     task_description = whether a company goes bankrupt within one year
///     task_name = Company
///
///     [feature]
///     name = Term
///     kind = categorical
///     categories = 36 months | 60 months
///
/// Recognised feature keys: name, kind, description, categories, units.
inline SchemaDocument parse_schema(std::string_view doc, std::string_view origin = "schema") {
  const auto sections = kv::parse(doc, origin);
  SchemaDocument out;
  const auto& head = sections.front();
  auto required = [&](const char* key) {
    const auto* v = head.find(key);
    if (!v || v->empty()) throw AuditError(std::string(origin) + ": missing '" + key + "'");
    return *v;
  };
  out.label_column = required("label_column");
  out.positive_class_name = required("positive_class");
  out.task_description = required("task_description");
  out.task_name = head.find("task_name") ? *head.find("task_name") : out.positive_class_name;

  for (std::size_t s = 1; s < sections.size(); ++s) {
    const auto& sec = sections[s];
    if (sec.name != "feature")
      throw AuditError(std::string(origin) + ":" + std::to_string(sec.line) + ": unknown section [" + sec.name + "]");
    FeatureSchema f;
    for (const auto& [key, value] : sec.entries) {
      if (key == "name") {
        f.name = value;
      } else if (key == "kind") {
        if (value == "numeric") f.kind = FeatureKind::numeric;
        else if (value == "categorical") f.kind = FeatureKind::categorical;
        else throw AuditError(std::string(origin) + ": feature kind must be numeric or categorical, got '" + value + "'");
      } else if (key == "description") {
        f.description = value;
      } else if (key == "units") {
        f.units = value;
      } else if (key == "categories") {
        for (const auto& token : text::split(value, '|'))
          if (auto t = text::trim(token); !t.empty()) f.categories.emplace_back(t);
      } else {
        throw AuditError(std::string(origin) + ": unknown feature key '" + key + "'");
      }
    }
    out.features.push_back(std::move(f));
  }
  validate_schema(out.features);
  for (const auto& f : out.features)
    if (f.name == out.label_column) throw AuditError(std::string(origin) + ": label column is also a feature");
  return out;
}

inline SchemaDocument load_schema(const std::string& path) { return parse_schema(kv::read_text(path), path); }

inline std::string format_schema(const Dataset& d) {
  std::string out;
  out += "label_column = " + d.label_column + "\n";
  out += "positive_class = " + d.positive_class_name + "\n";
  out += "task_description = " + d.task_description + "\n";
  out += "task_name = " + d.task_name + "\n";
  for (const auto& f : d.schema) {
    out += "\n[feature]\nname = " + f.name + "\nkind = " + to_string(f.kind) + "\n";
    if (f.description) out += "description = " + *f.description + "\n";
    if (f.units) out += "units = " + *f.units + "\n";
    if (!f.categories.empty()) {
      out += "categories = ";
      for (std::size_t i = 0; i < f.categories.size(); ++i) out += (i ? " | " : "") + f.categories[i];
      out += "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loading

/// Builds a Dataset from already-split CSV records (header first).
inline Dataset dataset_from_records(const std::vector<csv::Row>& records, const SchemaDocument& schema) {
  if (records.empty()) throw AuditError("dataset: CSV has no header row");
  const auto& header = records.front();

  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name(text::trim(header[c]));
    if (!column_of.emplace(name, c).second) throw AuditError("dataset: duplicate column '" + name + "'");
  }
  std::set<std::string> known{schema.label_column};
  for (const auto& f : schema.features) known.insert(f.name);
  for (const auto& [name, c] : column_of)
    if (!known.count(name)) throw AuditError("dataset: unknown column '" + name + "'");
  for (const auto& f : schema.features)
    if (!column_of.count(f.name)) throw AuditError("dataset: missing schema column '" + f.name + "'");
  if (!column_of.count(schema.label_column))
    throw AuditError("dataset: missing label column '" + schema.label_column + "'");

  Dataset d;
  d.schema = schema.features;
  d.label_column = schema.label_column;
  d.positive_class_name = schema.positive_class_name;
  d.task_description = schema.task_description;
  d.task_name = schema.task_name;

  const std::size_t label_col = column_of.at(schema.label_column);
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() == 1 && rec[0].empty()) continue;  // blank line
    const std::string where = "row " + std::to_string(r) + " ";
    if (rec.size() != header.size())
      throw AuditError("dataset: " + where + "has " + std::to_string(rec.size()) + " fields, header has " +
                       std::to_string(header.size()));
    std::vector<Cell> cells;
    cells.reserve(d.schema.size());
    for (const auto& f : d.schema) {
      const auto raw = text::trim(rec[column_of.at(f.name)]);
      if (raw.empty()) {
        cells.emplace_back();
      } else if (f.kind == FeatureKind::numeric) {
        auto v = text::parse_double(raw);
        if (!v)
          throw AuditError("dataset: " + where + "column '" + f.name + "': unparseable numeric cell '" +
                           std::string(raw) + "'");
        cells.push_back(Cell::number(*v));
      } else {
        if (std::find(f.categories.begin(), f.categories.end(), raw) == f.categories.end())
          throw AuditError("dataset: " + where + "column '" + f.name + "': unknown category '" + std::string(raw) +
                           "'");
        cells.push_back(Cell::category(std::string(raw)));
      }
    }
    const auto label = text::parse_double(rec[label_col]);
    if (!label || (*label != 0.0 && *label != 1.0))
      throw AuditError("dataset: " + where + "non-binary label '" + rec[label_col] + "'");
    d.rows.push_back(std::move(cells));
    d.labels.push_back(static_cast<int>(*label));
  }
  if (d.rows.empty()) throw AuditError("dataset: no data rows");
  return d;
}

inline Dataset load_dataset(const std::string& csv_path, const std::string& schema_path) {
  return dataset_from_records(csv::read_file(csv_path), load_schema(schema_path));
}

/// Writes rows in schema order with the label column last. Numbers use the
/// shortest exact representation so a reload is bit-identical.
inline void write_dataset_csv(const Dataset& d, const std::string& path) {
  std::vector<csv::Row> out;
  csv::Row header;
  for (const auto& f : d.schema) header.push_back(f.name);
  header.push_back(d.label_column);
  out.push_back(std::move(header));
  for (std::size_t r = 0; r < d.rows.size(); ++r) {
    csv::Row rec;
    for (const auto& cell : d.rows[r]) {
      if (cell.missing()) rec.emplace_back();
      else if (cell.is_number()) rec.push_back(text::exact(cell.as_number()));
      else rec.push_back(cell.as_category());
    }
    rec.push_back(std::to_string(d.labels[r]));
    out.push_back(std::move(rec));
  }
  csv::write_file(path, out);
}

// ---------------------------------------------------------------------------
// Stats

struct NumericSummary {
  double p01 = 0.0;
  double p99 = 0.0;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct ColumnStats {
  std::optional<NumericSummary> numeric;  // empty for categorical or all-missing columns
  std::map<std::string, std::size_t> frequencies;  // categorical; missing counted under "unknown"
  std::size_t missing = 0;
};

struct FeatureStats {
  std::vector<ColumnStats> columns;
  double prevalence = 0.0;
};

/// Nearest-rank percentile on sorted values: element ceil(p/100 * n), 1-based.
inline double nearest_rank(const std::vector<double>& sorted, double percent) {
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(percent / 100.0 * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

inline FeatureStats compute_feature_stats(const Dataset& d) {
  if (d.rows.empty()) throw AuditError("feature stats: dataset is empty");
  FeatureStats stats;
  stats.prevalence = d.prevalence();
  for (std::size_t f = 0; f < d.schema.size(); ++f) {
    ColumnStats col;
    if (d.schema[f].kind == FeatureKind::numeric) {
      std::vector<double> values;
      for (const auto& row : d.rows) {
        if (row[f].missing()) ++col.missing;
        else values.push_back(row[f].as_number());
      }
      if (!values.empty()) {
        std::sort(values.begin(), values.end());
        NumericSummary s;
        s.p01 = nearest_rank(values, 1.0);
        s.p99 = nearest_rank(values, 99.0);
        double sum = 0.0;
        for (double v : values) sum += v;
        s.mean = sum / static_cast<double>(values.size());
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size()));
        col.numeric = s;
      }
    } else {
      for (const auto& row : d.rows) {
        if (row[f].missing()) {
          ++col.missing;
          ++col.frequencies["unknown"];
        } else {
          ++col.frequencies[row[f].as_category()];
        }
      }
    }
    stats.columns.push_back(std::move(col));
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {
inline std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool, std::size_t n, Rng& rng) {
  // Partial Fisher-Yates from the front.
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}
}  // namespace detail

/// Row indices to explain, returned in ascending row order. Stratified mode
/// takes round(n * prevalence) positives (half rounds up), capped by what exists.
inline std::vector<std::size_t> sample_instances(const Dataset& d, std::size_t n, std::uint64_t seed,
                                                 bool stratified = false) {
  if (n > d.row_count())
    throw AuditError("sample_instances: n=" + std::to_string(n) + " exceeds row count " +
                     std::to_string(d.row_count()));
  if (n == 0) return {};
  Rng rng(seed);
  std::vector<std::size_t> picked;
  if (!stratified) {
    std::vector<std::size_t> all(d.row_count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    picked = detail::draw_without_replacement(std::move(all), n, rng);
  } else {
    std::vector<std::size_t> pos, neg;
    for (std::size_t r = 0; r < d.row_count(); ++r) (d.labels[r] == 1 ? pos : neg).push_back(r);
    auto want_pos = static_cast<std::size_t>(std::floor(static_cast<double>(n) * d.prevalence() + 0.5));
    want_pos = std::min(want_pos, pos.size());
    std::size_t want_neg = n - want_pos;
    if (want_neg > neg.size()) {
      want_neg = neg.size();
      want_pos = n - want_neg;
    }
    picked = detail::draw_without_replacement(std::move(pos), want_pos, rng);
    auto negatives = detail::draw_without_replacement(std::move(neg), want_neg, rng);
    picked.insert(picked.end(), negatives.begin(), negatives.end());
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace llmaudit

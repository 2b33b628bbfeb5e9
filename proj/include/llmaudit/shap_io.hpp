#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "llmaudit/attribution.hpp"
#include "llmaudit/csv.hpp"
#include "llmaudit/keyvalue.hpp"

namespace llmaudit {

/// Sidecar path for an attribution CSV: "shap.csv" -> "shap.meta.json".
inline std::string shap_sidecar_path(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension(".meta.json");
  return p.string();
}

inline nlohmann::ordered_json shap_metadata(const ShapMatrix& s) {
  nlohmann::ordered_json j;
  j["explainer"] = to_string(s.explainer);
  j["seed"] = s.seed;
  j["max_evals"] = s.max_evals;
  j["base_value"] = s.base_value;
  j["base_values"] = s.base_values;
  j["predictions"] = s.predictions;
  j["feature_names"] = s.feature_names;
  j["instance_ids"] = s.instance_ids;
  j["provenance"] = s.provenance;
  j["dropped"] = nlohmann::ordered_json::array();
  for (const auto& d : s.dropped) j["dropped"].push_back({{"row", d.row}, {"reason", d.reason}});
  return j;
}

/// Long-format CSV (instance_id, feature, shap_value) plus the JSON sidecar.
inline void write_shap_matrix(const ShapMatrix& s, const std::string& csv_path) {
  std::vector<csv::Row> rows{{"instance_id", "feature", "shap_value"}};
  for (std::size_t k = 0; k < s.instance_ids.size(); ++k)
    for (std::size_t j = 0; j < s.feature_names.size(); ++j)
      rows.push_back({std::to_string(s.instance_ids[k]), s.feature_names[j], text::exact(s.values[k][j])});
  csv::write_file(csv_path, rows);
  std::ofstream meta(shap_sidecar_path(csv_path), std::ios::binary | std::ios::trunc);
  if (!meta) throw AuditError("cannot write '" + shap_sidecar_path(csv_path) + "'");
  meta << shap_metadata(s).dump(2) << '\n';
}

/// Reads a matrix written by write_shap_matrix or produced by an external
/// toolchain in the same layout. The sidecar is required; its feature_names
/// and instance_ids, when present, fix the order, otherwise the order of
/// first appearance in the CSV is used.
inline ShapMatrix read_shap_matrix(const std::string& csv_path) {
  const auto sidecar = shap_sidecar_path(csv_path);
  if (!std::filesystem::exists(sidecar)) throw AuditError("attribution import: missing sidecar '" + sidecar + "'");
  auto meta = nlohmann::json::parse(kv::read_text(sidecar), nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw AuditError("attribution import: sidecar is not a JSON object");

  const auto records = csv::read_file(csv_path);
  if (records.empty() || records.front().size() != 3 || records.front()[0] != "instance_id" ||
      records.front()[1] != "feature" || records.front()[2] != "shap_value")
    throw AuditError("attribution import: header must be instance_id,feature,shap_value");

  ShapMatrix s;
  s.explainer = parse_explainer(meta.value("explainer", std::string("external")));
  s.seed = meta.value("seed", std::uint64_t{0});
  s.max_evals = meta.value("max_evals", std::uint64_t{0});
  s.provenance = meta.value("provenance", std::string());
  if (meta.contains("feature_names")) s.feature_names = meta["feature_names"].get<std::vector<std::string>>();
  if (meta.contains("instance_ids")) s.instance_ids = meta["instance_ids"].get<std::vector<std::size_t>>();
  const bool fixed_features = !s.feature_names.empty();
  const bool fixed_instances = !s.instance_ids.empty();

  std::map<std::pair<std::size_t, std::string>, double> cells;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() == 1 && rec[0].empty()) continue;
    const std::string where = csv_path + ":" + std::to_string(r + 1);
    if (rec.size() != 3) throw AuditError("attribution import: malformed row at " + where);
    const auto id = text::parse_double(rec[0]);
    const auto value = text::parse_double(rec[2]);
    if (!id || *id < 0 || *id != std::floor(*id) || !value)
      throw AuditError("attribution import: malformed row at " + where);
    const auto row = static_cast<std::size_t>(*id);
    if (!cells.emplace(std::pair{row, rec[1]}, *value).second)
      throw AuditError("attribution import: duplicate entry at " + where);
    if (!fixed_features && std::find(s.feature_names.begin(), s.feature_names.end(), rec[1]) == s.feature_names.end())
      s.feature_names.push_back(rec[1]);
    if (!fixed_instances && std::find(s.instance_ids.begin(), s.instance_ids.end(), row) == s.instance_ids.end())
      s.instance_ids.push_back(row);
  }
  if (cells.size() != s.feature_names.size() * s.instance_ids.size())
    throw AuditError("attribution import: expected one value per (instance, feature); got " +
                     std::to_string(cells.size()));
  for (auto id : s.instance_ids) {
    std::vector<double> row;
    for (const auto& f : s.feature_names) {
      auto it = cells.find({id, f});
      if (it == cells.end())
        throw AuditError("attribution import: no value for instance " + std::to_string(id) + ", feature '" + f + "'");
      row.push_back(it->second);
    }
    s.values.push_back(std::move(row));
  }
  if (meta.contains("base_values")) s.base_values = meta["base_values"].get<std::vector<double>>();
  if (meta.contains("predictions")) s.predictions = meta["predictions"].get<std::vector<double>>();
  s.base_value = meta.value("base_value", 0.0);
  if (meta.contains("dropped"))
    for (const auto& d : meta["dropped"]) s.dropped.push_back({d.at("row").get<std::size_t>(), d.value("reason", "")});
  return s;
}

}  // namespace llmaudit

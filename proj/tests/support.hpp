#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "llmaudit.hpp"

namespace testsupport {

using namespace llmaudit;

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("llmaudit_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string feature_name(std::size_t i) { return "x" + std::to_string(i + 1); }

/// All-numeric dataset with features x1..xM.
inline Dataset numeric_dataset(const std::vector<std::vector<double>>& rows, const std::vector<int>& labels) {
  Dataset d;
  d.positive_class_name = "Default";
  d.task_description = "whether a borrower defaults";
  d.task_name = "Borrower";
  d.label_column = "y";
  const std::size_t m = rows.empty() ? 0 : rows.front().size();
  for (std::size_t i = 0; i < m; ++i) d.schema.push_back({feature_name(i), FeatureKind::numeric, {}, {}, {}});
  for (const auto& r : rows) {
    std::vector<Cell> cells;
    for (double v : r) cells.push_back(Cell::number(v));
    d.rows.push_back(std::move(cells));
  }
  d.labels = labels;
  if (d.labels.empty()) d.labels.assign(rows.size(), 0);
  return d;
}

/// Random numeric dataset; values drawn uniformly from [-2, 2] with 3 decimals
/// so prompt rendering (6 significant digits) is exact.
inline Dataset random_dataset(std::size_t n, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> rows(n, std::vector<double>(m));
  std::vector<int> labels(n);
  for (auto& r : rows)
    for (auto& v : r) v = std::round((uniform01(rng) * 4.0 - 2.0) * 1000.0) / 1000.0;
  for (auto& y : labels) y = uniform01(rng) < 0.4 ? 1 : 0;
  return numeric_dataset(rows, labels);
}

inline SyntheticModel linear_model(const std::vector<double>& weights, double bias = 0.0,
                                   SyntheticModel::Link link = SyntheticModel::Link::identity) {
  SyntheticModel m;
  m.link = link;
  m.bias = bias;
  for (std::size_t i = 0; i < weights.size(); ++i) m.weights[feature_name(i)] = weights[i];
  return m;
}

inline PredictorConfig synthetic_config(std::size_t parallelism = 1) {
  PredictorConfig c;
  c.kind = PredictorKind::synthetic;
  c.synthetic_model_path = "(in memory)";
  c.parallelism = parallelism;
  c.retry_backoff = std::chrono::milliseconds(0);
  return c;
}

inline std::unique_ptr<Predictor> synthetic_predictor(const SyntheticModel& m, std::size_t parallelism = 1,
                                                      std::optional<std::string> cache = std::nullopt) {
  auto c = synthetic_config(parallelism);
  c.cache_path = std::move(cache);
  return std::make_unique<Predictor>(c, std::make_unique<SyntheticBackend>(m));
}

/// Backend answering from a fixed script; counts calls.
class ScriptedBackend : public ResponseBackend {
public:
  explicit ScriptedBackend(std::function<Expected<std::string, BackendFailure>(const RenderedPrompt&)> fn)
      : fn_(std::move(fn)) {}
  Expected<std::string, BackendFailure> respond(const RenderedPrompt& p) override {
    ++calls;
    return fn_(p);
  }
  std::atomic<std::size_t> calls{0};

private:
  std::function<Expected<std::string, BackendFailure>(const RenderedPrompt&)> fn_;
};

inline BackgroundSet single_background(const std::vector<double>& values) {
  std::vector<Cell> row;
  for (double v : values) row.push_back(Cell::number(v));
  return BackgroundSet::from_rows({row});
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace testsupport

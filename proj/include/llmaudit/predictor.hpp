#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "llmaudit/digest.hpp"
#include "llmaudit/errors.hpp"
#include "llmaudit/promptgen.hpp"

namespace llmaudit {

enum class PredictorKind { remote, synthetic, replay };

inline const char* to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::remote: return "remote";
    case PredictorKind::replay: return "replay";
    case PredictorKind::synthetic: break;
  }
  return "synthetic";
}

inline PredictorKind parse_predictor_kind(std::string_view s) {
  if (s == "remote") return PredictorKind::remote;
  if (s == "synthetic") return PredictorKind::synthetic;
  if (s == "replay") return PredictorKind::replay;
  throw AuditError("predictor kind must be remote, synthetic or replay; got '" + std::string(s) + "'");
}

struct PredictorConfig {
  PredictorKind kind = PredictorKind::synthetic;
  std::optional<std::string> endpoint_url;  // full URL of the chat-completions route
  std::optional<std::string> model_name;
  double temperature = 0.0;
  std::size_t max_retries = 2;  // re-asks after the first attempt
  std::size_t parallelism = 1;
  std::optional<std::string> cache_path;
  std::optional<std::string> synthetic_model_path;
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{60000};
  std::chrono::milliseconds retry_backoff{500};  // doubled after each failed transport attempt
  bool strict_json = false;

  void validate() const {
    if (parallelism < 1) throw AuditError("predictor: parallelism must be >= 1");
    if (kind == PredictorKind::remote && (!endpoint_url || !model_name))
      throw AuditError("predictor: remote kind requires endpoint_url and model_name");
    if (kind == PredictorKind::replay && !cache_path) throw AuditError("predictor: replay kind requires cache_path");
    if (kind == PredictorKind::synthetic && !synthetic_model_path)
      throw AuditError("predictor: synthetic kind requires synthetic_model_path");
  }
};

// ---------------------------------------------------------------------------
// Ledger

enum class Phase : std::size_t { classification = 0, attribution, selfexpl, robustness };
inline constexpr std::size_t phase_count = 4;

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::classification: return "classification";
    case Phase::attribution: return "attribution";
    case Phase::selfexpl: return "selfexpl";
    case Phase::robustness: return "robustness";
  }
  return "?";
}

/// Snapshot of call accounting. Every request the predictor serves counts in
/// exactly one phase, either as a backend attempt (model_calls) or a cache
/// hit, so total_calls == sum(per_phase) == model_calls + cache_hits.
struct CallLedger {
  std::size_t total_calls = 0;
  std::size_t model_calls = 0;
  std::size_t cache_hits = 0;
  std::size_t parse_failures = 0;
  std::size_t transport_failures = 0;
  std::size_t replay_misses = 0;
  std::array<std::size_t, phase_count> per_phase{};

  [[nodiscard]] std::size_t phase(Phase p) const { return per_phase[static_cast<std::size_t>(p)]; }

  [[nodiscard]] nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["total_calls"] = total_calls;
    j["model_calls"] = model_calls;
    j["cache_hits"] = cache_hits;
    j["parse_failures"] = parse_failures;
    j["transport_failures"] = transport_failures;
    j["replay_misses"] = replay_misses;
    for (std::size_t i = 0; i < phase_count; ++i) j["per_phase"][to_string(static_cast<Phase>(i))] = per_phase[i];
    return j;
  }
};

namespace detail {
class AtomicLedger {
public:
  void model_call(Phase p) { ++model_calls_; ++per_phase_[static_cast<std::size_t>(p)]; }
  void cache_hit(Phase p) { ++cache_hits_; ++per_phase_[static_cast<std::size_t>(p)]; }
  void parse_failure() { ++parse_failures_; }
  void transport_failure() { ++transport_failures_; }
  void replay_miss() { ++replay_misses_; }

  [[nodiscard]] CallLedger snapshot() const {
    CallLedger l;
    l.model_calls = model_calls_;
    l.cache_hits = cache_hits_;
    l.parse_failures = parse_failures_;
    l.transport_failures = transport_failures_;
    l.replay_misses = replay_misses_;
    for (std::size_t i = 0; i < phase_count; ++i) l.per_phase[i] = per_phase_[i];
    for (auto c : l.per_phase) l.total_calls += c;
    return l;
  }

  void reset() {
    model_calls_ = cache_hits_ = parse_failures_ = transport_failures_ = replay_misses_ = 0;
    for (auto& c : per_phase_) c = 0;
  }

private:
  std::atomic<std::size_t> model_calls_{0}, cache_hits_{0}, parse_failures_{0}, transport_failures_{0},
      replay_misses_{0};
  std::array<std::atomic<std::size_t>, phase_count> per_phase_{};
};
}  // namespace detail

// ---------------------------------------------------------------------------
// Cache

/// Prompt-digest keyed response store backed by an append-only JSON-lines
/// file: {"digest": ..., "raw": ..., "probability": number|null}.
class ResponseCache {
public:
  struct Entry {
    std::string raw;
    std::optional<double> probability;
  };

  ResponseCache() = default;
  explicit ResponseCache(std::string path) : path_(std::move(path)) { load(); }

  [[nodiscard]] std::optional<Entry> lookup(const std::string& digest) const {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(digest); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  void store(const std::string& digest, const std::string& raw, std::optional<double> probability) {
    std::lock_guard lock(mutex_);
    if (!entries_.emplace(digest, Entry{raw, probability}).second) return;
    if (path_.empty()) return;
    nlohmann::ordered_json j;
    j["digest"] = digest;
    j["raw"] = raw;
    j["probability"] = probability ? nlohmann::ordered_json(*probability) : nlohmann::ordered_json(nullptr);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw AuditError("cache: cannot append to '" + path_ + "'");
    out << j.dump() << '\n';
  }

  [[nodiscard]] std::size_t size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
  }

private:
  void load() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // a cold cache is simply an absent file
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (text::trim(line).empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("digest") || !j.contains("raw"))
        throw AuditError("cache: malformed record at " + path_ + ":" + std::to_string(line_no));
      Entry e{j["raw"].get<std::string>(), std::nullopt};
      if (j.contains("probability") && j["probability"].is_number()) e.probability = j["probability"].get<double>();
      entries_.emplace(j["digest"].get<std::string>(), std::move(e));
    }
  }

  std::string path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Backends

struct BackendFailure {
  std::string message;
};

/// Produces the raw text a model returns for a prompt.
class ResponseBackend {
public:
  virtual ~ResponseBackend() = default;
  virtual Expected<std::string, BackendFailure> respond(const RenderedPrompt& prompt) = 0;
};

// ---------------------------------------------------------------------------
// Predictor

struct PredictError {
  enum class Kind { transport, parse, replay_miss };
  Kind kind = Kind::transport;
  std::string message;
  std::size_t attempts = 0;
};

inline const char* to_string(PredictError::Kind k) {
  switch (k) {
    case PredictError::Kind::parse: return "parse";
    case PredictError::Kind::replay_miss: return "replay_miss";
    case PredictError::Kind::transport: break;
  }
  return "transport";
}

struct PredictRequest {
  RenderedPrompt prompt;
  Phase phase = Phase::classification;
  std::size_t row = 0;
  std::string mask_digest;  // empty when no replacement values were imposed
};

struct PredictionRecord {
  std::size_t row = 0;
  std::string variant;
  std::string mask_digest;
  double probability = 0.0;
  bool clamped = false;
  double latency_ms = 0.0;
  bool from_cache = false;
};

struct ImpactAnswer {
  FeatureImpactLabel label;
  std::string raw;
  bool from_cache = false;
};

using PredictOutcome = Expected<PredictionRecord, PredictError>;
using ImpactOutcome = Expected<ImpactAnswer, PredictError>;

/// Runs `fn(i)` for i in [0, n) on at most `parallelism` threads and returns
/// the results in index order.
template <typename Fn>
auto parallel_map(std::size_t n, std::size_t parallelism, Fn&& fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<std::optional<R>> slots(n);
  const std::size_t workers = std::min(std::max<std::size_t>(parallelism, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) slots[i].emplace(fn(i));
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next++; i < n; i = next++) {
            try {
              slots[i].emplace(fn(i));
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

/// Uniform black-box probability interface with call accounting. Thread-safe.
class Predictor {
public:
  Predictor(PredictorConfig config, std::unique_ptr<ResponseBackend> backend)
      : config_(std::move(config)), backend_(std::move(backend)) {
    if (config_.parallelism < 1) throw AuditError("predictor: parallelism must be >= 1");
    if (config_.cache_path) cache_.emplace(*config_.cache_path);
    if (config_.kind == PredictorKind::replay && !cache_)
      throw AuditError("predictor: replay kind requires cache_path");
    if (config_.kind != PredictorKind::replay && !backend_) throw AuditError("predictor: backend required");
  }

  [[nodiscard]] const PredictorConfig& config() const noexcept { return config_; }
  [[nodiscard]] CallLedger ledger() const { return ledger_.snapshot(); }
  void reset_ledger() { ledger_.reset(); }

  PredictOutcome predict_proba(const PredictRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    std::optional<ParsedProbability> parsed;
    auto answer = query(request.prompt, request.phase, [&](const std::string& raw) -> std::optional<double> {
      auto p = parse_probability_response(raw, config_.strict_json);
      if (!p) return std::nullopt;
      parsed = p.value();
      return parsed->value;
    });
    if (!answer) return answer.error();
    PredictionRecord rec;
    rec.row = request.row;
    rec.variant = request.prompt.variant;
    rec.mask_digest = request.mask_digest;
    rec.probability = parsed->value;
    rec.clamped = parsed->clamped;
    rec.from_cache = answer.value().from_cache;
    rec.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return rec;
  }

  /// Results in input order; at most `parallelism` requests in flight. Items
  /// fail individually.
  std::vector<PredictOutcome> predict_batch(std::span<const PredictRequest> requests) {
    return parallel_map(requests.size(), config_.parallelism,
                        [&](std::size_t i) { return predict_proba(requests[i]); });
  }

  ImpactOutcome ask_impact(const RenderedPrompt& prompt, Phase phase = Phase::selfexpl) {
    std::optional<FeatureImpactLabel> parsed;
    auto answer = query(prompt, phase, [&](const std::string& raw) -> std::optional<double> {
      auto p = parse_impact_response(raw, config_.strict_json);
      if (!p) return std::nullopt;
      parsed = p.value();
      return std::nan("");  // impact answers store no probability
    });
    if (!answer) return answer.error();
    return ImpactAnswer{*parsed, answer.value().raw, answer.value().from_cache};
  }

  std::vector<ImpactOutcome> ask_impact_batch(std::span<const RenderedPrompt> prompts, Phase phase = Phase::selfexpl) {
    return parallel_map(prompts.size(), config_.parallelism, [&](std::size_t i) { return ask_impact(prompts[i], phase); });
  }

private:
  struct Answer {
    std::string raw;
    bool from_cache = false;
  };

  // `accept` parses a raw response; nullopt marks a parse failure, NaN means
  // "valid but carries no probability".
  template <typename Accept>
  Expected<Answer, PredictError> query(const RenderedPrompt& prompt, Phase phase, Accept&& accept) {
    const std::string digest = sha256_hex(prompt.text);
    if (cache_) {
      if (auto hit = cache_->lookup(digest)) {
        if (accept(hit->raw)) {
          ledger_.cache_hit(phase);
          return Answer{hit->raw, true};
        }
      }
    }
    if (config_.kind == PredictorKind::replay) {
      ledger_.replay_miss();
      return PredictError{PredictError::Kind::replay_miss, "no cached response for prompt " + digest.substr(0, 12), 0};
    }

    PredictError last{PredictError::Kind::transport, "no attempt made", 0};
    auto backoff = config_.retry_backoff;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
      ledger_.model_call(phase);
      auto raw = backend_->respond(prompt);
      if (!raw) {
        ledger_.transport_failure();
        last = {PredictError::Kind::transport, raw.error().message, attempt + 1};
        if (attempt < config_.max_retries && backoff.count() > 0) {
          std::this_thread::sleep_for(backoff);
          backoff *= 2;
        }
        continue;
      }
      const auto value = accept(raw.value());
      if (!value) {
        ledger_.parse_failure();
        last = {PredictError::Kind::parse, "unparseable response: " + raw.value().substr(0, 120), attempt + 1};
        continue;
      }
      if (cache_) cache_->store(digest, raw.value(), std::isnan(*value) ? std::nullopt : value);
      return Answer{raw.value(), false};
    }
    return last;
  }

  PredictorConfig config_;
  std::unique_ptr<ResponseBackend> backend_;
  std::optional<ResponseCache> cache_;
  detail::AtomicLedger ledger_;
};

}  // namespace llmaudit

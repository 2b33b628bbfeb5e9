#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "llmaudit/predictor.hpp"
#include "llmaudit/synthetic.hpp"

namespace llmaudit {

struct EndpointUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // request path, "/" when absent
};

inline EndpointUrl split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw AuditError("endpoint_url must start with http:// or https://");
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw AuditError("endpoint_url scheme must be http or https");
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

/// Chat-completions request body for one user prompt.
inline nlohmann::ordered_json chat_request_body(const std::string& model, const std::string& prompt,
                                                double temperature) {
  nlohmann::ordered_json body;
  body["model"] = model;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt}}});
  body["temperature"] = temperature;
  return body;
}

/// HTTP POST to a chat-completions compatible route; returns the first
/// choice's message content. The bearer token is read from the environment
/// variable named in the config at call time.
class RemoteBackend : public ResponseBackend {
public:
  explicit RemoteBackend(const PredictorConfig& config)
      : endpoint_(split_endpoint(config.endpoint_url.value_or(""))),
        model_(config.model_name.value_or("")),
        temperature_(config.temperature),
        timeout_(config.timeout),
        api_key_env_(config.api_key_env) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (endpoint_.origin.rfind("https://", 0) == 0)
      throw AuditError("https endpoints need a build with OpenSSL support");
#endif
  }

  Expected<std::string, BackendFailure> respond(const RenderedPrompt& prompt) override {
    httplib::Client client(endpoint_.origin);
    const auto secs = timeout_.count() / 1000;
    const auto usecs = (timeout_.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (const char* token = std::getenv(api_key_env_.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);

    const auto body = chat_request_body(model_, prompt.text, temperature_).dump();
    auto res = client.Post(endpoint_.path, headers, body, "application/json");
    if (!res) return BackendFailure{"transport error: " + httplib::to_string(res.error())};
    if (res->status != 200)
      return BackendFailure{"HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200)};

    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) return BackendFailure{"response body is not JSON"};
    try {
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      return BackendFailure{"response lacks choices[0].message.content"};
    }
  }

private:
  EndpointUrl endpoint_;
  std::string model_;
  double temperature_;
  std::chrono::milliseconds timeout_;
  std::string api_key_env_;
};

/// Builds the predictor described by `config`.
inline std::unique_ptr<Predictor> make_predictor(const PredictorConfig& config) {
  config.validate();
  std::unique_ptr<ResponseBackend> backend;
  switch (config.kind) {
    case PredictorKind::remote:
      backend = std::make_unique<RemoteBackend>(config);
      break;
    case PredictorKind::synthetic:
      backend = std::make_unique<SyntheticBackend>(SyntheticModel::load(*config.synthetic_model_path));
      break;
    case PredictorKind::replay:
      break;
  }
  return std::make_unique<Predictor>(config, std::move(backend));
}

}  // namespace llmaudit

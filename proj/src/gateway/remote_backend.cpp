#include "couplesim/gateway/remote_backend.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <cstdlib>

#include <nlohmann/json.hpp>

namespace couplesim::gateway {

using json = nlohmann::json;

RemoteConfig remote_config_from_json(const json& j) {
  RemoteConfig cfg;
  cfg.endpoint = j.value("endpoint", cfg.endpoint);
  cfg.model = j.value("model", cfg.model);
  cfg.api_key_env = j.value("api_key_env", cfg.api_key_env);
  cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
  cfg.retries = j.value("retries", cfg.retries);
  return cfg;
}

json chat_request_body(const RemoteConfig& cfg, const GatewayRequest& req) {
  json messages = json::array();
  if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
  messages.push_back({{"role", "user"}, {"content", req.prompt}});
  return {{"model", cfg.model},
          {"messages", messages},
          {"temperature", req.temperature},
          {"max_tokens", req.max_tokens}};
}

std::string parse_chat_response(const std::string& body) {
  try {
    auto j = json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    return content.is_null() ? std::string{} : content.get<std::string>();
  } catch (const json::exception& e) {
    throw GatewayError(GatewayError::Kind::Malformed, std::string("unparseable completion response: ") + e.what());
  }
}

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  auto scheme_end = cfg_.endpoint.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint must be an absolute URL: " + cfg_.endpoint);
  auto path_begin = cfg_.endpoint.find('/', scheme_end + 3);
  origin_ = cfg_.endpoint.substr(0, path_begin);
  path_ = path_begin == std::string::npos ? "/" : cfg_.endpoint.substr(path_begin);
}

GatewayResponse RemoteBackend::send(const GatewayRequest& req) {
  const auto started = std::chrono::steady_clock::now();
  httplib::Client client(origin_);
  const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  const auto body = chat_request_body(cfg_, req).dump();

  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
      const bool timed_out = res.error() == httplib::Error::Read || res.error() == httplib::Error::Write ||
                             res.error() == httplib::Error::ConnectionTimeout;
      if (attempt < cfg_.retries) continue;
      throw GatewayError(timed_out ? GatewayError::Kind::Timeout : GatewayError::Kind::BackendUnavailable,
                         "chat completion request failed: " + httplib::to_string(res.error()));
    }
    if (res->status >= 500 || res->status == 429) {
      if (attempt < cfg_.retries) continue;
      throw GatewayError(GatewayError::Kind::BackendUnavailable,
                         "chat completion endpoint returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200)
      throw GatewayError(GatewayError::Kind::BackendUnavailable,
                         "chat completion endpoint returned HTTP " + std::to_string(res->status));
    GatewayResponse out;
    out.text = parse_chat_response(res->body);
    out.backend_id = backend_id();
    out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started)
                         .count();
    return out;
  }
}

}  // namespace couplesim::gateway

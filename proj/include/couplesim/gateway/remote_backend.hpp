#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "couplesim/gateway/gateway.hpp"

namespace couplesim::gateway {

struct RemoteConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "COUPLESIM_API_KEY";
  std::int64_t timeout_ms = 30000;
  int retries = 1;  // extra attempts after a timeout or transport failure
};

RemoteConfig remote_config_from_json(const nlohmann::json& j);

// Builds the chat-completion request body:
// {model, messages:[{role, content}], temperature, max_tokens}.
nlohmann::json chat_request_body(const RemoteConfig& cfg, const GatewayRequest& req);

// Extracts choices[0].message.content; throws GatewayError(Malformed).
std::string parse_chat_response(const std::string& body);

// Chat-completion backend over HTTP(S). The API key is read from the
// environment variable named in the config on every request.
class RemoteBackend : public ModelGateway {
 public:
  explicit RemoteBackend(RemoteConfig cfg);

  GatewayResponse send(const GatewayRequest& request) override;
  std::string backend_id() const override { return "remote:" + cfg_.model; }
  bool deterministic() const override { return false; }

  const RemoteConfig& config() const { return cfg_; }

 private:
  RemoteConfig cfg_;
  std::string origin_;  // scheme://host[:port]
  std::string path_;
};

}  // namespace couplesim::gateway

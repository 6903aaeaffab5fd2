#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "couplesim/engine/runner.hpp"

namespace couplesim::service {

// Wire protocol: one JSON object per WebSocket text frame, with a "type"
// discriminator and "v": 1.
inline constexpr int kProtocolVersion = 1;

// ---- client -> server -------------------------------------------------------

struct CreateSession {
  std::optional<std::string> scenario_id;
  std::optional<std::string> custom_text;  // wins over scenario_id when both are set
  Difficulty difficulty = Difficulty::Normal;
};
struct TherapistMessage {
  std::string text;
  std::optional<Addressee> addressee;  // Alex, Jordan or Both
};
struct Interrupt {};
struct EndSession {
  std::string reason = "client";
};

using ClientEvent = std::variant<CreateSession, TherapistMessage, Interrupt, EndSession>;

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Throws ProtocolError: bad_frame, unsupported_version, unknown_type, bad_field.
ClientEvent parse_client_event(std::string_view frame);
nlohmann::json to_json(const ClientEvent& e);

// ---- server -> client -------------------------------------------------------

struct SessionCreated {
  std::string session_id;
  std::string scenario_id;
  Difficulty difficulty = Difficulty::Normal;
  Stage stage = Stage::Greeting;
};
struct SessionClosed {
  std::string reason;
};
struct ErrorEvent {
  std::string code;
  std::string message;
};

using ServerEvent =
    std::variant<SessionCreated, couplesim::AgentMessage, couplesim::StageChanged, couplesim::A2AStarted,
                 couplesim::A2AEnded, SessionClosed, ErrorEvent>;

// Engine events that clients see; persistence-only events map to nullopt.
std::optional<ServerEvent> to_server_event(const TurnEvent& e);

std::string_view type_name(const ServerEvent& e);
nlohmann::json to_json(const ServerEvent& e, const std::string& session_id = {});
std::string encode(const ServerEvent& e, const std::string& session_id = {});
// Inverse of to_json; used by tests and replay tooling. Throws ProtocolError.
ServerEvent parse_server_event(std::string_view frame);

}  // namespace couplesim::service

#include "couplesim/service/events.hpp"

#include "couplesim/engine/transcript_io.hpp"

namespace couplesim::service {

using json = nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

json parse_frame(std::string_view frame) {
  json j;
  try {
    j = json::parse(frame);
  } catch (const json::exception& e) {
    throw ProtocolError("bad_frame", std::string("frame is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("bad_frame", "frame must be a JSON object");
  if (!j.contains("type") || !j["type"].is_string()) throw ProtocolError("bad_frame", "missing \"type\"");
  if (j.contains("v") && j["v"] != kProtocolVersion)
    throw ProtocolError("unsupported_version", "unsupported protocol version " + j["v"].dump());
  return j;
}

std::string string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) throw ProtocolError("bad_field", std::string("missing string \"") + key + "\"");
  return j[key].get<std::string>();
}

template <class F>
auto parse_enum(F parse, const json& j, const char* key) {
  try {
    return parse(string_field(j, key));
  } catch (const ParseError& e) {
    throw ProtocolError("bad_field", e.what());
  }
}

}  // namespace

ClientEvent parse_client_event(std::string_view frame) {
  const json j = parse_frame(frame);
  const auto type = j["type"].get<std::string>();
  if (type == "CreateSession") {
    CreateSession e;
    if (j.contains("scenario_id") && !j["scenario_id"].is_null()) e.scenario_id = string_field(j, "scenario_id");
    if (j.contains("custom_text") && !j["custom_text"].is_null()) e.custom_text = string_field(j, "custom_text");
    if (j.contains("difficulty")) e.difficulty = parse_enum(parse_difficulty, j, "difficulty");
    if (!e.scenario_id && !e.custom_text) throw ProtocolError("bad_field", "CreateSession needs scenario_id or custom_text");
    return e;
  }
  if (type == "TherapistMessage") {
    TherapistMessage e;
    e.text = string_field(j, "text");
    if (j.contains("addressee") && !j["addressee"].is_null()) {
      e.addressee = parse_enum(parse_addressee, j, "addressee");
      if (*e.addressee == Addressee::Therapist) throw ProtocolError("bad_field", "addressee must be Alex, Jordan or Both");
    }
    return e;
  }
  if (type == "Interrupt") return Interrupt{};
  if (type == "EndSession") return EndSession{};
  throw ProtocolError("unknown_type", "unknown client event type \"" + type + "\"");
}

json to_json(const ClientEvent& e) {
  json j = std::visit(overloaded{[](const CreateSession& c) {
                                   json o = {{"type", "CreateSession"}, {"difficulty", to_string(c.difficulty)}};
                                   if (c.scenario_id) o["scenario_id"] = *c.scenario_id;
                                   if (c.custom_text) o["custom_text"] = *c.custom_text;
                                   return o;
                                 },
                                 [](const TherapistMessage& m) {
                                   json o = {{"type", "TherapistMessage"}, {"text", m.text}};
                                   if (m.addressee) o["addressee"] = to_string(*m.addressee);
                                   return o;
                                 },
                                 [](const Interrupt&) { return json{{"type", "Interrupt"}}; },
                                 [](const EndSession&) { return json{{"type", "EndSession"}}; }},
                      e);
  j["v"] = kProtocolVersion;
  return j;
}

std::optional<ServerEvent> to_server_event(const TurnEvent& e) {
  return std::visit(overloaded{[](const TherapistRecorded&) -> std::optional<ServerEvent> { return std::nullopt; },
                               [](const DecisionRecorded&) -> std::optional<ServerEvent> { return std::nullopt; },
                               [](const EngineError& err) -> std::optional<ServerEvent> {
                                 return ErrorEvent{err.code, err.message};
                               },
                               [](const auto& ev) -> std::optional<ServerEvent> { return ServerEvent{ev}; }},
                    e);
}

std::string_view type_name(const ServerEvent& e) {
  return std::visit(overloaded{[](const SessionCreated&) { return std::string_view("SessionCreated"); },
                               [](const AgentMessage&) { return std::string_view("AgentMessage"); },
                               [](const StageChanged&) { return std::string_view("StageChanged"); },
                               [](const A2AStarted&) { return std::string_view("A2AStarted"); },
                               [](const A2AEnded&) { return std::string_view("A2AEnded"); },
                               [](const SessionClosed&) { return std::string_view("SessionClosed"); },
                               [](const ErrorEvent&) { return std::string_view("Error"); }},
                    e);
}

json to_json(const ServerEvent& e, const std::string& session_id) {
  json j = std::visit(
      overloaded{[](const SessionCreated& c) {
                   return json{{"session_id", c.session_id},
                               {"scenario_id", c.scenario_id},
                               {"difficulty", to_string(c.difficulty)},
                               {"stage", to_string(c.stage)}};
                 },
                 [](const AgentMessage& m) {
                   json o = couplesim::to_json(m.utterance);
                   o["voice_style"] = m.voice_style;
                   o["audio_ref"] = nullptr;
                   return o;
                 },
                 [](const StageChanged& c) {
                   return json{{"from", to_string(c.from)}, {"to", to_string(c.to)}, {"override_rule", to_string(c.rule)}};
                 },
                 [](const A2AStarted& a) { return json{{"remaining", a.remaining}}; },
                 [](const A2AEnded&) { return json::object(); },
                 [](const SessionClosed& c) { return json{{"reason", c.reason}}; },
                 [](const ErrorEvent& err) { return json{{"code", err.code}, {"msg", err.message}}; }},
      e);
  j["type"] = type_name(e);
  j["v"] = kProtocolVersion;
  if (!session_id.empty() && !j.contains("session_id")) j["session_id"] = session_id;
  return j;
}

std::string encode(const ServerEvent& e, const std::string& session_id) { return to_json(e, session_id).dump(); }

ServerEvent parse_server_event(std::string_view frame) {
  const json j = parse_frame(frame);
  const auto type = j["type"].get<std::string>();
  try {
    if (type == "SessionCreated")
      return SessionCreated{j.at("session_id").get<std::string>(), j.value("scenario_id", std::string{}),
                            parse_difficulty(j.at("difficulty").get<std::string>()),
                            parse_stage(j.at("stage").get<std::string>())};
    if (type == "AgentMessage")
      return AgentMessage{utterance_from_json(j), j.value("voice_style", std::string{})};
    if (type == "StageChanged")
      return StageChanged{parse_stage(j.at("from").get<std::string>()), parse_stage(j.at("to").get<std::string>()),
                          parse_override_rule(j.at("override_rule").get<std::string>())};
    if (type == "A2AStarted") return A2AStarted{j.at("remaining").get<int>()};
    if (type == "A2AEnded") return A2AEnded{};
    if (type == "SessionClosed") return SessionClosed{j.value("reason", std::string{})};
    if (type == "Error") return ErrorEvent{j.at("code").get<std::string>(), j.value("msg", std::string{})};
  } catch (const std::exception& e) {
    throw ProtocolError("bad_field", e.what());
  }
  throw ProtocolError("unknown_type", "unknown server event type \"" + type + "\"");
}

}  // namespace couplesim::service

#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "couplesim/engine/runner.hpp"
#include "couplesim/engine/transcript_io.hpp"
#include "couplesim/service/events.hpp"

namespace couplesim::service {

// Session files under one directory (see transcript_io.hpp for the layout).
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  bool exists(const std::string& id) const;
  void create(const Session& s);  // sidecar plus an empty transcript
  void append(const std::string& id, const Utterance& u);
  void save(const Session& s, bool closed);
  LoadedSession load(const std::string& id) const;

 private:
  std::filesystem::path dir_;
};

using ServerSink = std::function<void(const ServerEvent&)>;

// Single-writer front end of one session: turns client events into engine
// calls, persists every utterance and decision before the matching event is
// handed to the sink.
class SessionController {
 public:
  SessionController(Session session, const Engine& engine, SessionStore* store, Clock clock = wall_clock_ms);

  void handle_therapist_message(const TherapistMessage& msg, const ServerSink& sink);
  // Drives an active loop; see SessionRunner::run_a2a.
  bool run_a2a(const ServerSink& sink, const InterruptProbe& probe = {});
  void handle_interrupt(const ServerSink& sink);
  void end_session(const ServerSink& sink, const std::string& reason = "client");

  bool closed() const { return closed_; }
  bool a2a_active() const { return session_.a2a.active; }
  const Session& session() const { return session_; }

 private:
  EventSink engine_sink(const ServerSink& sink);

  Session session_;
  SessionRunner runner_;
  SessionStore* store_;
  bool closed_ = false;
};

}  // namespace couplesim::service

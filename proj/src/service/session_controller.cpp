#include "couplesim/service/session_controller.hpp"

#include "couplesim/engine/transcript_io.hpp"

namespace couplesim::service {

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

bool SessionStore::exists(const std::string& id) const { return std::filesystem::exists(sidecar_path(dir_, id)); }

void SessionStore::create(const Session& s) { write_session(dir_, s, false); }

void SessionStore::append(const std::string& id, const Utterance& u) { append_transcript(dir_, id, u); }

void SessionStore::save(const Session& s, bool closed) { write_sidecar(dir_, s, closed); }

LoadedSession SessionStore::load(const std::string& id) const { return read_session(dir_, id); }

SessionController::SessionController(Session session, const Engine& engine, SessionStore* store, Clock clock)
    : session_(std::move(session)), runner_(session_, engine, std::move(clock)), store_(store) {}

EventSink SessionController::engine_sink(const ServerSink& sink) {
  return [this, &sink](const TurnEvent& ev) {
    if (store_) {
      if (const auto* t = std::get_if<TherapistRecorded>(&ev)) store_->append(session_.id, t->utterance);
      if (const auto* a = std::get_if<AgentMessage>(&ev)) store_->append(session_.id, a->utterance);
      if (std::holds_alternative<DecisionRecorded>(ev)) store_->save(session_, false);
    }
    if (auto out = to_server_event(ev)) sink(*out);
  };
}

void SessionController::handle_therapist_message(const TherapistMessage& msg, const ServerSink& sink) {
  if (closed_) {
    sink(ErrorEvent{"session_closed", "session " + session_.id + " is closed"});
    return;
  }
  if (msg.text.empty()) {
    sink(ErrorEvent{"bad_field", "therapist message is empty"});
    return;
  }
  runner_.therapist_message(msg.text, msg.addressee, engine_sink(sink));
}

bool SessionController::run_a2a(const ServerSink& sink, const InterruptProbe& probe) {
  if (closed_) return true;
  return runner_.run_a2a(engine_sink(sink), probe);
}

void SessionController::handle_interrupt(const ServerSink& sink) {
  if (closed_) return;
  runner_.interrupt(engine_sink(sink));
}

void SessionController::end_session(const ServerSink& sink, const std::string& reason) {
  if (closed_) return;
  if (session_.a2a.active) {
    session_.a2a = A2ALoopState{};
    sink(A2AEnded{});
  }
  closed_ = true;
  if (store_) store_->save(session_, true);
  sink(SessionClosed{reason});
}

}  // namespace couplesim::service

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <variant>

#include "couplesim/engine/engine.hpp"

namespace couplesim {

// Everything a turn produces, in order. TherapistRecorded and DecisionRecorded
// exist for persistence; the remaining events are what clients see.
struct TherapistRecorded {
  Utterance utterance;
};
struct AgentMessage {
  Utterance utterance;
  std::string voice_style;
};
struct DecisionRecorded {
  StageDecision decision;
};
struct StageChanged {
  Stage from;
  Stage to;
  OverrideRule rule;
};
struct A2AStarted {
  int remaining;
};
struct A2AEnded {};
struct EngineError {
  std::string code;
  std::string message;
};

using TurnEvent =
    std::variant<TherapistRecorded, AgentMessage, DecisionRecorded, StageChanged, A2AStarted, A2AEnded, EngineError>;
using EventSink = std::function<void(const TurnEvent&)>;
// Polled before every loop utterance; true pauses the loop so the caller can
// handle a queued client event.
using InterruptProbe = std::function<bool()>;
using Clock = std::function<std::int64_t()>;

std::int64_t wall_clock_ms();

// Drives one session through therapist turns and agent-to-agent loops. Not
// thread-safe: the owner serializes all calls for a session.
class SessionRunner {
 public:
  SessionRunner(Session& session, const Engine& engine, Clock clock = wall_clock_ms);

  // Appends the message (interrupting an active loop), decides the stage,
  // and collects the replies: both agents answer Alex first when the policy
  // says Both. An accusatory reply in ProblemRaising/Escalation starts a loop
  // and ends the reply burst; run_a2a drives it afterwards.
  void therapist_message(const std::string& text, std::optional<Addressee> addressee, const EventSink& sink);

  // Emits loop utterances until the loop ends (A2AEnded) or the probe asks
  // to pause. Returns true when the loop is finished. Gateway failures end the
  // loop with EngineError and A2AEnded.
  bool run_a2a(const EventSink& sink, const InterruptProbe& probe = {});

  // Interrupt without a message: stops the loop, running the grace exchange
  // first on Hard. No-op when no loop is active.
  void interrupt(const EventSink& sink);

  Session& session() { return session_; }
  const Session& session() const { return session_; }

 private:
  bool emit_loop_utterance(const EventSink& sink);
  void finish_grace(const EventSink& sink);
  AgentMessage say(AgentId agent, Addressee addressee);

  Session& session_;
  const Engine& engine_;
  Clock clock_;
};

}  // namespace couplesim

#include "couplesim/engine/runner.hpp"

#include <chrono>
#include <vector>

namespace couplesim {

std::int64_t wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

SessionRunner::SessionRunner(Session& session, const Engine& engine, Clock clock)
    : session_(session), engine_(engine), clock_(std::move(clock)) {}

AgentMessage SessionRunner::say(AgentId agent, Addressee addressee) {
  auto u = engine_.respond(session_, agent, addressee, clock_());
  append_utterance(session_, u);
  return AgentMessage{u, engine_.voice_style_for(agent, *u.emotion)};
}

void SessionRunner::therapist_message(const std::string& text, std::optional<Addressee> addressee,
                                      const EventSink& sink) {
  if (addressee == Addressee::Therapist) addressee.reset();

  Utterance t;
  t.index = session_.next_index();
  t.speaker = Speaker::Therapist;
  t.addressee = addressee ? *addressee : addressed_by_name(text).value_or(Addressee::Both);
  t.text = text;
  t.stage = session_.current_stage;
  t.ts_ms = clock_();

  const bool loop_was_active = session_.a2a.active;
  couplesim::interrupt(session_, t);
  const std::size_t therapist_pos = session_.transcript.size() - 1;
  sink(TherapistRecorded{t});
  if (loop_was_active) {
    finish_grace(sink);
    sink(A2AEnded{});
  }

  const Stage before = session_.current_stage;
  const auto decision = engine_.advance_stage(session_);
  sink(DecisionRecorded{decision});
  if (decision.final_stage != before) sink(StageChanged{before, decision.final_stage, decision.override_rule});

  // Grace lines may follow the message; the policy looks at the message itself.
  std::span<const Utterance> upto(session_.transcript.data(), therapist_pos + 1);
  const auto next = engine_.next_speaker(upto, session_.current_stage, addressee);

  std::vector<AgentId> responders;
  if (next == Addressee::Alex) {
    responders = {AgentId::Alex};
  } else if (next == Addressee::Jordan) {
    responders = {AgentId::Jordan};
  } else {
    responders = {AgentId::Alex, AgentId::Jordan};
  }

  try {
    for (auto agent : responders) {
      const auto msg = say(agent, Addressee::Therapist);
      sink(msg);
      if (start_or_step_a2a(session_, msg.utterance, engine_.config().lexicon).active) {
        sink(A2AStarted{session_.a2a.remaining_exchanges});
        return;
      }
    }
    // A lone reply may hand the floor to the partner for one line. That line
    // never opens a loop, so partner-to-partner runs stay within the loop bound.
    if (responders.size() == 1) {
      const AgentId partner = partner_of(responders.front());
      if (engine_.next_speaker(session_.transcript, session_.current_stage) == as_addressee(partner))
        sink(say(partner, as_addressee(responders.front())));
    }
  } catch (const gateway::GatewayError& e) {
    sink(EngineError{"gateway_error", e.what()});
  }
}

bool SessionRunner::emit_loop_utterance(const EventSink& sink) {
  auto& loop = session_.a2a;
  const AgentId speaker = loop.next_speaker();
  try {
    const auto msg = say(speaker, as_addressee(partner_of(speaker)));
    sink(msg);
    start_or_step_a2a(session_, msg.utterance, engine_.config().lexicon);
    return true;
  } catch (const gateway::GatewayError& e) {
    loop = A2ALoopState{};
    sink(EngineError{"gateway_error", e.what()});
    return false;
  }
}

void SessionRunner::finish_grace(const EventSink& sink) {
  while (session_.a2a.active && emit_loop_utterance(sink)) {
  }
}

bool SessionRunner::run_a2a(const EventSink& sink, const InterruptProbe& probe) {
  if (!session_.a2a.active) return true;
  while (session_.a2a.active) {
    if (probe && probe()) return false;
    if (!emit_loop_utterance(sink)) break;
  }
  sink(A2AEnded{});
  return true;
}

void SessionRunner::interrupt(const EventSink& sink) {
  if (!session_.a2a.active) return;
  interrupt_a2a(session_);
  finish_grace(sink);
  sink(A2AEnded{});
}

}  // namespace couplesim

#include <doctest.h>

#include "support.hpp"

using namespace couplesim;
using testsupport::utt;

namespace {

const auto T = Speaker::Therapist;
const auto A = Speaker::Alex;
const auto J = Speaker::Jordan;

Session fresh(Stage stage = Stage::Greeting, Difficulty d = Difficulty::Normal) {
  Session s;
  s.id = "t";
  s.scenario = *prompts::PromptLibrary::builtin().find_scenario("s1");
  s.difficulty = d;
  s.current_stage = stage;
  return s;
}

Utterance agent_line(const Session& s, Speaker sp, Addressee to, std::string text) {
  return utt(sp, to, std::move(text), s.next_index(), s.current_stage);
}

struct Recorder {
  std::vector<TurnEvent> events;
  EventSink sink() {
    return [this](const TurnEvent& e) { events.push_back(e); };
  }
  template <class E>
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& e : events) n += std::holds_alternative<E>(e);
    return n;
  }
  template <class E>
  std::ptrdiff_t first() const {
    for (std::size_t i = 0; i < events.size(); ++i)
      if (std::holds_alternative<E>(events[i])) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
  std::vector<Utterance> agent_lines() const {
    std::vector<Utterance> out;
    for (const auto& e : events)
      if (const auto* m = std::get_if<AgentMessage>(&e)) out.push_back(m->utterance);
    return out;
  }
};

struct Rig {
  gateway::ScriptedBackend agents;
  gateway::ScriptedBackend classifier;
  Engine engine;
  Session session;
  std::int64_t now = 0;
  SessionRunner runner;

  explicit Rig(Stage start = Stage::Greeting, Difficulty d = Difficulty::Normal)
      : engine(prompts::PromptLibrary::builtin(), agents, &classifier),
        session(fresh(start, d)),
        runner(session, engine, [this] { return ++now; }) {
    // Unmatched speaker questions leave the oracle without an opinion.
    classifier.add_rule([](const gateway::GatewayRequest& r) { return r.purpose == "speaker"; },
                        [](const gateway::GatewayRequest&) { return std::string(); });
  }
  void propose(Stage s) { classifier.queue_output("stage", std::string(display_name(s))); }
};

}  // namespace

TEST_CASE("append_utterance enforces the invariants") {
  auto s = fresh();
  append_utterance(s, utt(T, Addressee::Both, "Hello.", 0));
  append_utterance(s, utt(A, Addressee::Therapist, "Hi.", 1));
  CHECK(s.therapist_turns == 1);
  CHECK(s.next_index() == 2);

  CHECK_THROWS_AS(append_utterance(s, utt(T, Addressee::Both, "gap", 5)), std::invalid_argument);
  auto no_emotion = utt(J, Addressee::Therapist, "x", 2);
  no_emotion.emotion.reset();
  CHECK_THROWS_AS(append_utterance(s, no_emotion), std::invalid_argument);
  auto therapist_emotion = utt(T, Addressee::Both, "x", 2);
  therapist_emotion.emotion = Emotion::Calm;
  CHECK_THROWS_AS(append_utterance(s, therapist_emotion), std::invalid_argument);
  CHECK_THROWS_AS(append_utterance(s, utt(J, Addressee::Jordan, "me", 2)), std::invalid_argument);
  CHECK(s.transcript.size() == 2);
}

TEST_CASE("context formatting") {
  std::vector<Utterance> u = {utt(T, Addressee::Both, "Hi both.", 0), utt(A, Addressee::Jordan, "You never call.", 1)};
  CHECK(format_context(u) == "0. Therapist (to Both): Hi both.\n1. Alex (to Jordan): You never call.");
  CHECK(format_stage_history({}) == "None");
  std::vector<StageDecision> h(2);
  h[0].final_stage = Stage::Greeting;
  h[1].final_stage = Stage::ProblemRaising;
  CHECK(format_stage_history(h) == "Greeting -> Problem Raising");
  CHECK(tail(u, 1).size() == 1);
  CHECK(tail(u, 1)[0].index == 1);
  CHECK(tail(u, 10).size() == 2);
}

TEST_CASE("a2a loop bounds") {
  SUBCASE("escalation allows five exchanges") {
    auto s = fresh(Stage::Escalation);
    auto trigger = agent_line(s, A, Addressee::Therapist, "You never listen to me!");
    append_utterance(s, trigger);
    auto st = start_or_step_a2a(s, trigger);
    CHECK(st.active);
    CHECK(st.remaining_exchanges == 5);
    CHECK(st.accuser == AgentId::Alex);
    CHECK(st.next_speaker() == AgentId::Jordan);
    int lines = 0;
    while (s.a2a.active) {
      const auto sp = as_speaker(s.a2a.next_speaker());
      auto u = agent_line(s, sp, as_addressee(partner_of(*agent_of(sp))), "line");
      append_utterance(s, u);
      start_or_step_a2a(s, u);
      ++lines;
    }
    CHECK(lines == 10);
  }
  SUBCASE("problem raising allows three") {
    auto s = fresh(Stage::ProblemRaising);
    auto trigger = agent_line(s, J, Addressee::Therapist, "You always do this.");
    append_utterance(s, trigger);
    CHECK(start_or_step_a2a(s, trigger).remaining_exchanges == 3);
    CHECK(s.a2a.next_speaker() == AgentId::Alex);
  }
  SUBCASE("other stages never open a loop") {
    for (auto stage : {Stage::Greeting, Stage::DeEscalation, Stage::Enactment, Stage::WrapUp}) {
      auto s = fresh(stage);
      auto trigger = agent_line(s, A, Addressee::Therapist, "You never listen to me!");
      CHECK_FALSE(start_or_step_a2a(s, trigger).active);
    }
  }
  SUBCASE("non-accusatory lines do not open a loop") {
    auto s = fresh(Stage::Escalation);
    CHECK_FALSE(start_or_step_a2a(s, agent_line(s, A, Addressee::Therapist, "I feel tired.")).active);
  }
  SUBCASE("loop order is enforced") {
    auto s = fresh(Stage::Escalation);
    auto trigger = agent_line(s, A, Addressee::Therapist, "You never listen to me!");
    append_utterance(s, trigger);
    start_or_step_a2a(s, trigger);
    CHECK_THROWS_AS(start_or_step_a2a(s, agent_line(s, A, Addressee::Jordan, "again")), std::invalid_argument);
    CHECK_THROWS_AS(start_or_step_a2a(s, utt(T, Addressee::Both, "stop", s.next_index())), std::invalid_argument);
  }
}

TEST_CASE("interrupts") {
  auto opened = [](Difficulty d) {
    auto s = fresh(Stage::Escalation, d);
    auto trigger = agent_line(s, A, Addressee::Therapist, "You never listen to me!");
    append_utterance(s, trigger);
    start_or_step_a2a(s, trigger);
    return s;
  };
  SUBCASE("normal stops at once") {
    auto s = opened(Difficulty::Normal);
    CHECK_FALSE(interrupt_a2a(s));
    CHECK_FALSE(s.a2a.active);
  }
  SUBCASE("hard owes the pending exchange") {
    auto s = opened(Difficulty::Hard);
    CHECK(interrupt_a2a(s));
    CHECK(s.a2a.active);
    CHECK(s.a2a.grace);
    auto u1 = agent_line(s, J, Addressee::Alex, "a");
    append_utterance(s, u1);
    start_or_step_a2a(s, u1);
    CHECK(s.a2a.active);
    auto u2 = agent_line(s, A, Addressee::Jordan, "b");
    append_utterance(s, u2);
    start_or_step_a2a(s, u2);
    CHECK_FALSE(s.a2a.active);
  }
  SUBCASE("interrupt appends the therapist message") {
    auto s = opened(Difficulty::Easy);
    interrupt(s, utt(T, Addressee::Both, "Let's pause.", s.next_index()));
    CHECK_FALSE(s.a2a.active);
    CHECK(s.transcript.back().speaker == T);
    CHECK_THROWS_AS(interrupt(s, utt(A, Addressee::Therapist, "x", s.next_index())), std::invalid_argument);
  }
  SUBCASE("no loop, nothing to interrupt") {
    auto s = fresh();
    CHECK_FALSE(interrupt_a2a(s));
  }
}

TEST_CASE("stage proposals") {
  gateway::ScriptedBackend agents;
  const auto& lib = prompts::PromptLibrary::builtin();
  auto s = fresh();
  append_utterance(s, utt(T, Addressee::Both, "Hello Alex and Jordan, welcome.", 0));

  SUBCASE("no classifier uses the heuristic") {
    Engine e(lib, agents);
    const auto [stage, fallback] = e.propose_stage(s);
    CHECK(fallback);
    CHECK(stage == Stage::Greeting);
  }
  SUBCASE("classifier answer is used") {
    gateway::ScriptedBackend cls;
    cls.queue_output("stage", "  **Problem Raising**. ");
    Engine e(lib, agents, &cls);
    const auto [stage, fallback] = e.propose_stage(s);
    CHECK_FALSE(fallback);
    CHECK(stage == Stage::ProblemRaising);
  }
  SUBCASE("failing classifier falls back") {
    gateway::ScriptedBackend cls;
    cls.fail_next(gateway::GatewayError::Kind::Timeout, 10);
    Engine e(lib, agents, &cls);
    CHECK(e.propose_stage(s).second);
  }
  SUBCASE("garbage falls back") {
    gateway::ScriptedBackend cls;
    cls.add_rule([](const gateway::GatewayRequest&) { return true; },
                 [](const gateway::GatewayRequest&) { return std::string("banana"); });
    Engine e(lib, agents, &cls);
    CHECK(e.propose_stage(s).second);
  }
}

TEST_CASE("advance_stage records decisions") {
  gateway::ScriptedBackend agents, cls;
  Engine e(prompts::PromptLibrary::builtin(), agents, &cls);
  auto s = fresh();
  CHECK_THROWS_AS(e.advance_stage(s), std::logic_error);

  append_utterance(s, utt(T, Addressee::Both, "Hi.", 0));
  cls.queue_output("stage", "Escalation");
  auto d = e.advance_stage(s);
  CHECK(d.proposed == Stage::Escalation);
  CHECK(d.final_stage == Stage::Greeting);
  CHECK(d.override_rule == OverrideRule::TurnGate);
  CHECK(d.therapist_turn == 1);

  append_utterance(s, utt(T, Addressee::Both, "Time to wrap up.", 1));
  cls.queue_output("stage", "Wrap-up");
  d = e.advance_stage(s);
  CHECK(s.wrapped_up);
  CHECK(s.current_stage == Stage::WrapUp);

  append_utterance(s, utt(T, Addressee::Both, "Actually, tell me more.", 2));
  cls.queue_output("stage", "Problem Raising");
  d = e.advance_stage(s);
  CHECK(d.final_stage == Stage::WrapUp);
  CHECK(d.override_rule == OverrideRule::WrapUpAbsorbing);
  CHECK(s.stage_history.size() == 3);
}

TEST_CASE("respond builds an agent line without appending") {
  gateway::ScriptedBackend agents;
  Engine e(prompts::PromptLibrary::builtin(), agents);
  auto s = fresh(Stage::Escalation);
  append_utterance(s, utt(T, Addressee::Both, "Hi.", 0));
  const auto u = e.respond(s, AgentId::Jordan, Addressee::Therapist, 42);
  CHECK(u.index == 1);
  CHECK(u.speaker == J);
  CHECK(u.emotion == Emotion::Sad);
  CHECK(u.stage == Stage::Escalation);
  CHECK(u.ts_ms == 42);
  CHECK_FALSE(u.text.empty());
  CHECK(s.transcript.size() == 1);
  CHECK(agents.owner_of(u.text) == std::pair{AgentId::Jordan, Stage::Escalation});
}

TEST_CASE("runner: reply routing") {
  SUBCASE("named addressee gets one reply") {
    Rig r;
    Recorder rec;
    r.runner.therapist_message("Jordan, how was your week?", std::nullopt, rec.sink());
    const auto lines = rec.agent_lines();
    REQUIRE(lines.size() == 1);
    CHECK(lines[0].speaker == J);
    CHECK(lines[0].addressee == Addressee::Therapist);
    CHECK(rec.first<TherapistRecorded>() == 0);
    CHECK(rec.first<DecisionRecorded>() == 1);
  }
  SUBCASE("explicit addressee") {
    Rig r;
    Recorder rec;
    r.runner.therapist_message("How was your week?", Addressee::Alex, rec.sink());
    REQUIRE(rec.agent_lines().size() == 1);
    CHECK(rec.agent_lines()[0].speaker == A);
    CHECK(r.session.transcript[0].addressee == Addressee::Alex);
  }
  SUBCASE("both answer, Alex first") {
    Rig r;
    Recorder rec;
    r.runner.therapist_message("Welcome, both of you.", std::nullopt, rec.sink());
    const auto lines = rec.agent_lines();
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].speaker == A);
    CHECK(lines[1].speaker == J);
  }
  SUBCASE("stage change is announced") {
    Rig r;
    Recorder rec;
    r.propose(Stage::ProblemRaising);
    r.runner.therapist_message("What brings you in?", std::nullopt, rec.sink());
    REQUIRE(rec.count<StageChanged>() == 1);
    const auto& sc = std::get<StageChanged>(rec.events[static_cast<std::size_t>(rec.first<StageChanged>())]);
    CHECK(sc.from == Stage::Greeting);
    CHECK(sc.to == Stage::ProblemRaising);
    CHECK(sc.rule == OverrideRule::None);
  }
}

TEST_CASE("runner: loops") {
  Rig r(Stage::Greeting, Difficulty::Normal);
  for (int i = 0; i < 6; ++i) {
    Recorder rec;
    r.propose(Stage::Greeting);
    r.runner.therapist_message("Hello again.", std::nullopt, rec.sink());
  }
  Recorder rec;
  r.propose(Stage::Escalation);
  r.agents.queue_output("agent", "You never listen to me!");
  r.runner.therapist_message("Alex, what happened?", std::nullopt, rec.sink());
  CHECK(r.session.current_stage == Stage::Escalation);
  REQUIRE(rec.count<A2AStarted>() == 1);
  CHECK(std::get<A2AStarted>(rec.events.back()).remaining == 5);
  CHECK(r.session.a2a.active);

  SUBCASE("run to completion") {
    Recorder loop;
    CHECK(r.runner.run_a2a(loop.sink()));
    const auto lines = loop.agent_lines();
    CHECK(lines.size() == 10);
    CHECK(lines.front().speaker == J);
    for (const auto& u : lines) CHECK(u.addressee == as_addressee(partner_of(*agent_of(u.speaker))));
    CHECK(std::holds_alternative<A2AEnded>(loop.events.back()));
  }
  SUBCASE("probe pauses, a new message ends the loop first") {
    Recorder loop;
    int budget = 3;
    CHECK_FALSE(r.runner.run_a2a(loop.sink(), [&] { return budget-- <= 0; }));
    CHECK(loop.agent_lines().size() == 3);
    CHECK(loop.count<A2AEnded>() == 0);

    Recorder next;
    r.propose(Stage::DeEscalation);
    r.runner.therapist_message("Let's slow down.", std::nullopt, next.sink());
    CHECK_FALSE(r.session.a2a.active);
    const auto ended = next.first<A2AEnded>();
    const auto first_reply = next.first<AgentMessage>();
    REQUIRE(ended >= 0);
    REQUIRE(first_reply >= 0);
    CHECK(ended < first_reply);
  }
  SUBCASE("gateway failure ends the loop") {
    r.agents.fail_next(gateway::GatewayError::Kind::BackendUnavailable, 5);
    Recorder loop;
    CHECK(r.runner.run_a2a(loop.sink()));
    REQUIRE(loop.count<EngineError>() == 1);
    CHECK(std::get<EngineError>(loop.events[0]).code == "gateway_error");
    CHECK(std::holds_alternative<A2AEnded>(loop.events.back()));
    CHECK_FALSE(r.session.a2a.active);
  }
  SUBCASE("interrupt without a message") {
    Recorder loop;
    r.runner.interrupt(loop.sink());
    CHECK(loop.agent_lines().empty());
    CHECK(loop.count<A2AEnded>() == 1);
    Recorder again;
    r.runner.interrupt(again.sink());
    CHECK(again.events.empty());
  }
}

TEST_CASE("runner: hard interrupt finishes the exchange") {
  Rig r(Stage::ProblemRaising, Difficulty::Hard);
  Recorder rec;
  r.propose(Stage::ProblemRaising);
  r.agents.queue_output("agent", "You always ignore me!");
  r.runner.therapist_message("Alex?", std::nullopt, rec.sink());
  REQUIRE(r.session.a2a.active);
  Recorder loop;
  int budget = 1;
  r.runner.run_a2a(loop.sink(), [&] { return budget-- <= 0; });
  CHECK(loop.agent_lines().size() == 1);
  Recorder stop;
  r.runner.interrupt(stop.sink());
  CHECK(stop.agent_lines().size() == 1);
  CHECK_FALSE(r.session.a2a.active);
}

TEST_CASE("runner: gateway failure on a reply") {
  Rig r;
  r.agents.fail_next(gateway::GatewayError::Kind::Timeout, 5);
  Recorder rec;
  r.runner.therapist_message("Alex, hello.", std::nullopt, rec.sink());
  CHECK(rec.count<EngineError>() == 1);
  CHECK(rec.count<DecisionRecorded>() == 1);
  CHECK(r.session.transcript.size() == 1);
}

TEST_CASE("randomized sessions keep the hard rules") {
  const auto v = testsupport::run_random_sessions(150, 99);
  CHECK(v.sessions == 150);
  CHECK(v.gate == 0);
  CHECK(v.force == 0);
  CHECK(v.triple == 0);
  CHECK(v.absorbing == 0);
  CHECK(v.numbering == 0);
  CHECK(v.force_checked > 0);
}

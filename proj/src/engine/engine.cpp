#include "couplesim/engine/engine.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace couplesim {

std::string format_context(std::span<const Utterance> utterances) {
  std::string out;
  for (const auto& u : utterances) {
    if (!out.empty()) out.push_back('\n');
    std::string text = u.text;
    std::replace(text.begin(), text.end(), '\n', ' ');
    std::replace(text.begin(), text.end(), '\r', ' ');
    out += std::to_string(u.index) + ". " + std::string(to_string(u.speaker)) + " (to " +
           std::string(to_string(u.addressee)) + "): " + text;
  }
  return out;
}

std::string format_stage_history(std::span<const StageDecision> history) {
  if (history.empty()) return "None";
  std::string out;
  for (const auto& d : history) {
    if (!out.empty()) out += " -> ";
    out += display_name(d.final_stage);
  }
  return out;
}

std::span<const Utterance> tail(std::span<const Utterance> all, std::size_t n) {
  return n >= all.size() ? all : all.subspan(all.size() - n);
}

void append_utterance(Session& session, Utterance u) {
  if (u.index != session.next_index())
    throw std::invalid_argument("utterance index " + std::to_string(u.index) + " breaks the sequence (expected " +
                                std::to_string(session.next_index()) + ")");
  if (is_agent(u.speaker) != u.emotion.has_value())
    throw std::invalid_argument("emotion must be present exactly for agent utterances");
  if (auto self = agent_of(u.speaker); self && u.addressee == as_addressee(*self))
    throw std::invalid_argument("an agent cannot address itself");
  if (u.speaker == Speaker::Therapist) ++session.therapist_turns;
  session.transcript.push_back(std::move(u));
}

A2ALoopState start_or_step_a2a(Session& session, const Utterance& trigger, const AccusatoryLexicon& lexicon) {
  auto& loop = session.a2a;
  const auto speaker = agent_of(trigger.speaker);
  if (!speaker) throw std::invalid_argument("a2a trigger must be an agent utterance");

  if (!loop.active) {
    const Stage stage = session.current_stage;
    if ((stage != Stage::ProblemRaising && stage != Stage::Escalation) || !detect_accusatory(trigger.text, lexicon))
      return loop;
    loop = A2ALoopState{};
    loop.active = true;
    loop.stage_bound = stage;
    loop.remaining_exchanges = stage == Stage::Escalation ? 5 : 3;
    loop.accuser = *speaker;
    return loop;
  }

  if (*speaker != loop.next_speaker())
    throw std::invalid_argument("a2a loop expected " + std::string(to_string(loop.next_speaker())) + " to speak");
  if (!loop.half_exchange) {
    loop.half_exchange = true;
    return loop;
  }
  loop.half_exchange = false;
  --loop.remaining_exchanges;
  if (loop.remaining_exchanges == 0 || loop.grace) {
    loop.active = false;
    loop.grace = false;
  }
  return loop;
}

bool interrupt_a2a(Session& session) {
  auto& loop = session.a2a;
  if (!loop.active) return false;
  if (prompts::has_interrupt_grace(session.difficulty)) {
    loop.grace = true;
    return true;
  }
  loop.active = false;
  loop.half_exchange = false;
  return false;
}

void interrupt(Session& session, Utterance therapist_msg) {
  if (therapist_msg.speaker != Speaker::Therapist) throw std::invalid_argument("interrupt requires a therapist message");
  interrupt_a2a(session);
  append_utterance(session, std::move(therapist_msg));
}

Engine::Engine(const prompts::PromptLibrary& prompts, gateway::ModelGateway& agents,
               gateway::ModelGateway* classifier, EngineConfig config)
    : prompts_(prompts), agents_(agents), classifier_(classifier), config_(std::move(config)) {}

std::pair<Stage, bool> Engine::propose_stage(const Session& session) const {
  const auto context = tail(session.transcript, config_.classifier_window);
  if (classifier_) {
    std::vector<std::string> labels;
    for (auto s : kAllStages) labels.emplace_back(display_name(s));
    try {
      const auto prompt = prompts_.render(prompts::TemplateId::StageClassifier,
                                          {{"context", format_context(context)},
                                           {"stage_str", format_stage_history(session.stage_history)}});
      return {parse_stage(gateway::classify(*classifier_, prompt, labels, "stage")), false};
    } catch (const gateway::GatewayError&) {
    }
  }
  std::vector<Stage> history;
  history.reserve(session.stage_history.size());
  for (const auto& d : session.stage_history) history.push_back(d.final_stage);
  return {classify_stage_fallback(context, history), true};
}

StageDecision Engine::advance_stage(Session& session) const {
  if (session.transcript.empty() || session.transcript.back().speaker != Speaker::Therapist)
    throw std::logic_error("advance_stage runs right after a therapist message");
  StageDecision d;
  std::tie(d.proposed, d.used_fallback) = propose_stage(session);
  const auto ruled = apply_hard_rules(d.proposed, session);
  d.final_stage = ruled.final_stage;
  d.override_rule = ruled.rule;
  d.therapist_turn = session.therapist_turns;
  session.stage_history.push_back(d);
  session.current_stage = d.final_stage;
  if (d.final_stage == Stage::WrapUp) session.wrapped_up = true;
  return d;
}

Addressee Engine::next_speaker(std::span<const Utterance> context, Stage stage,
                               std::optional<Addressee> explicit_addressee) const {
  SpeakerOracle oracle;
  if (classifier_) {
    oracle = [this](std::span<const Utterance> ctx, Stage) -> std::optional<Addressee> {
      static const std::vector<std::string> labels = {"Alex", "Jordan", "both", "therapist"};
      try {
        const auto prompt =
            prompts_.render(prompts::TemplateId::SpeakerClassifier, {{"context", format_context(ctx)}});
        return parse_addressee(gateway::classify(*classifier_, prompt, labels, "speaker"));
      } catch (const gateway::GatewayError&) {
        return std::nullopt;
      }
    };
  }
  return determine_next_speaker(tail(context, config_.speaker_window), stage, explicit_addressee, oracle,
                                config_.lexicon);
}

Utterance Engine::respond(const Session& session, AgentId agent, Addressee addressee, std::int64_t ts_ms) const {
  const Stage stage = session.current_stage;
  const auto system = prompts::agent_system_prompt(prompts_, agent, stage, session.scenario, session.difficulty);
  const auto context = tail(session.transcript, config_.agent_window);
  std::string prompt = "Conversation so far:\n" + (context.empty() ? std::string("(nothing yet)") : format_context(context)) +
                       "\n\nReply as " + std::string(to_string(agent)) + ", speaking to " +
                       std::string(addressee == Addressee::Therapist ? "the therapist" : to_string(addressee)) +
                       ". Give only the words you say aloud.";

  auto opts = config_.completion;
  opts.purpose = "agent";
  auto resp = gateway::complete(agents_, system, prompt, opts);

  Utterance u;
  u.index = session.next_index();
  u.speaker = as_speaker(agent);
  u.addressee = addressee;
  u.text = std::move(resp.text);
  u.emotion = resp.emotion_override.value_or(emotion_for(agent, stage));
  u.stage = stage;
  u.ts_ms = ts_ms;
  return u;
}

std::string Engine::voice_style_for(AgentId agent, Emotion emotion) const {
  try {
    return prompts::voice_style(prompts_, agent, emotion);
  } catch (const prompts::PromptError&) {
    return {};
  }
}

}  // namespace couplesim

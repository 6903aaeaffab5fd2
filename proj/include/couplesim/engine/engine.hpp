#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "couplesim/engine/rules.hpp"
#include "couplesim/engine/session.hpp"
#include "couplesim/gateway/gateway.hpp"
#include "couplesim/prompts/prompt_library.hpp"

namespace couplesim {

struct EngineConfig {
  std::size_t classifier_window = 10;  // utterances shown to the stage classifier
  std::size_t speaker_window = 5;      // utterances seen by the next-speaker policy
  std::size_t agent_window = 30;       // transcript tail in agent prompts
  AccusatoryLexicon lexicon;
  gateway::CompleteOptions completion;
};

// "{index}. {Speaker} (to {Addressee}): {text}" per line.
std::string format_context(std::span<const Utterance> utterances);
// "Greeting -> Problem Raising", or "None".
std::string format_stage_history(std::span<const StageDecision> history);

// Last n utterances (all of them when fewer).
std::span<const Utterance> tail(std::span<const Utterance> all, std::size_t n);

// Appends after checking the Utterance/Session invariants: gap-free indices,
// emotion iff agent speaker, agents never address themselves. Counts therapist
// turns. Throws std::invalid_argument on violation.
void append_utterance(Session& session, Utterance u);

// Activates the loop on an accusatory agent line in ProblemRaising (3
// exchanges) or Escalation (5); outside those stages this is a no-op. While
// the loop is active, `trigger` must be the loop's next utterance and advances
// it; the loop deactivates when its exchanges (or a grace exchange) complete.
A2ALoopState start_or_step_a2a(Session& session, const Utterance& trigger,
                               const AccusatoryLexicon& lexicon = AccusatoryLexicon{});

// Stops an active loop. On difficulties with interrupt grace the loop stays
// active until the pending exchange completes. Returns true while a grace
// exchange is still owed.
bool interrupt_a2a(Session& session);

// interrupt_a2a, then appends the therapist message.
void interrupt(Session& session, Utterance therapist_msg);

// Stage controller and agent responder. The engine holds no session state;
// one instance may serve many sessions concurrently.
class Engine {
 public:
  // `agents` produces agent lines. `classifier` may be null, in which case
  // every decision comes from the fallback heuristic; so does every decision
  // where the classifier fails.
  Engine(const prompts::PromptLibrary& prompts, gateway::ModelGateway& agents,
         gateway::ModelGateway* classifier = nullptr, EngineConfig config = {});

  // Proposed stage for the current context, and whether the heuristic was used.
  std::pair<Stage, bool> propose_stage(const Session& session) const;

  // Runs after a therapist message was appended: proposes, applies the hard
  // rules, records the decision and updates current_stage / wrapped_up.
  StageDecision advance_stage(Session& session) const;

  // Next-speaker policy over the last utterances of `context`. The
  // speaker-classifier prompt resolves ambiguous "you" references when a
  // classifier gateway is configured.
  Addressee next_speaker(std::span<const Utterance> context, Stage stage,
                         std::optional<Addressee> explicit_addressee = std::nullopt) const;

  // Generates one line for `agent` in the current stage; does not append.
  Utterance respond(const Session& session, AgentId agent, Addressee addressee, std::int64_t ts_ms) const;

  std::string voice_style_for(AgentId agent, Emotion emotion) const;

  const EngineConfig& config() const { return config_; }
  const prompts::PromptLibrary& prompts() const { return prompts_; }

 private:
  const prompts::PromptLibrary& prompts_;
  gateway::ModelGateway& agents_;
  gateway::ModelGateway* classifier_;
  EngineConfig config_;
};

}  // namespace couplesim

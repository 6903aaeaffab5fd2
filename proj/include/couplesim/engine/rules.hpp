#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "couplesim/engine/session.hpp"
#include "couplesim/engine/types.hpp"

namespace couplesim {

// Phrases that mark a second-person accusation. Matching is
// case-insensitive on whitespace-collapsed text.
class AccusatoryLexicon {
 public:
  AccusatoryLexicon();  // {"you always", "you never"}
  explicit AccusatoryLexicon(std::vector<std::string> phrases);

  AccusatoryLexicon& extend(std::string phrase);
  const std::vector<std::string>& phrases() const { return phrases_; }

 private:
  std::vector<std::string> phrases_;
};

bool detect_accusatory(std::string_view text, const AccusatoryLexicon& lexicon = AccusatoryLexicon{});

Emotion emotion_for(AgentId agent, Stage stage);

struct HardRuleResult {
  Stage final_stage;
  OverrideRule rule;
  friend bool operator==(const HardRuleResult&, const HardRuleResult&) = default;
};

// Applies the transition constraints to a classifier proposal, highest
// priority first:
//   WrapUpAbsorbing   wrap-up was entered before          -> WrapUp
//   TurnGate          turn <= 5 and proposed Escalation    -> last non-Escalation stage (Greeting if none)
//   ForceEscalation   turn >= 7, no Escalation yet, current stage ProblemRaising -> Escalation
//   ForceDeEscalation last two decisions were Escalation   -> DeEscalation
// `therapist_turn` counts the therapist message that triggered this decision.
HardRuleResult apply_hard_rules(Stage proposed, int therapist_turn, std::span<const StageDecision> history,
                                bool wrapped_up);
HardRuleResult apply_hard_rules(Stage proposed, const Session& session);

inline constexpr int kEscalationGateTurn = 5;
inline constexpr int kForceEscalationTurn = 7;
inline constexpr int kMaxConsecutiveEscalation = 2;

// Keyword heuristic over the classifier guidelines; used whenever the
// classifier gateway is absent or fails. Signals from the newest therapist
// message weigh more than agent lines. Ties resolve in guideline order.
Stage classify_stage_fallback(std::span<const Utterance> context, std::span<const Stage> history);

// Agents addressed by name in vocative position: "Alex, ...", "... Jordan?",
// "Hi Alex". Both when both are addressed.
std::optional<Addressee> addressed_by_name(std::string_view text);

// Resolves an agent line whose second-person reference is ambiguous. Returns
// the partner or Therapist; std::nullopt means "no opinion".
using SpeakerOracle = std::function<std::optional<Addressee>(std::span<const Utterance> context, Stage stage)>;

// Next-speaker policy. After a therapist message: explicit addressee, then a
// vocative name, then Both. After an agent line: accusation or direct address
// of the partner hands the floor to the partner; an ambiguous "you" asks the
// oracle (Therapist without one); otherwise Therapist. The therapist is never
// selected to follow the therapist.
Addressee determine_next_speaker(std::span<const Utterance> context, Stage stage,
                                 std::optional<Addressee> explicit_addressee = std::nullopt,
                                 const SpeakerOracle& oracle = {},
                                 const AccusatoryLexicon& lexicon = AccusatoryLexicon{});

}  // namespace couplesim

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace couplesim {

// Interaction stages. The declaration order is for display only; transitions
// between stages are not ordered.
enum class Stage { Greeting, ProblemRaising, Escalation, DeEscalation, Enactment, WrapUp };

inline constexpr std::array<Stage, 6> kAllStages = {
    Stage::Greeting,   Stage::ProblemRaising, Stage::Escalation,
    Stage::DeEscalation, Stage::Enactment,    Stage::WrapUp};

enum class AgentId { Alex, Jordan };
inline constexpr std::array<AgentId, 2> kAllAgents = {AgentId::Alex, AgentId::Jordan};

enum class Role { Demander, Withdrawer };

enum class Emotion {
  Neutral, Sad, Angry, Hopeful, Vulnerable, Relieved,
  Anxious, Cautious, Open, Calm, Defensive
};

inline constexpr std::array<Emotion, 11> kAllEmotions = {
    Emotion::Neutral, Emotion::Sad,     Emotion::Angry,    Emotion::Hopeful,
    Emotion::Vulnerable, Emotion::Relieved, Emotion::Anxious, Emotion::Cautious,
    Emotion::Open,    Emotion::Calm,    Emotion::Defensive};

// Who an utterance is directed at. Also used as the result type of the
// next-speaker policy, where Both means "both agents respond".
enum class Addressee { Alex, Jordan, Both, Therapist };

enum class Speaker { Alex, Jordan, Therapist };

enum class Difficulty { Easy, Normal, Hard };

// Hard rule that replaced the classifier's proposal, if any.
enum class OverrideRule { None, TurnGate, ForceEscalation, ForceDeEscalation, WrapUpAbsorbing };

class ParseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Identifier spelling ("ProblemRaising") used in files and on the wire.
std::string_view to_string(Stage s);
std::string_view to_string(AgentId a);
std::string_view to_string(Role r);
std::string_view to_string(Emotion e);
std::string_view to_string(Addressee a);
std::string_view to_string(Speaker s);
std::string_view to_string(Difficulty d);
std::string_view to_string(OverrideRule r);

// Human-facing stage names as they appear in the classifier prompt
// ("Problem Raising", "De-Escalation", "Wrap-up").
std::string_view display_name(Stage s);

// Parsers accept the identifier spelling case-insensitively; stage parsing also
// accepts the display name. They throw ParseError on unknown input.
Stage parse_stage(std::string_view s);
AgentId parse_agent(std::string_view s);
Emotion parse_emotion(std::string_view s);
Addressee parse_addressee(std::string_view s);
Speaker parse_speaker(std::string_view s);
Difficulty parse_difficulty(std::string_view s);
OverrideRule parse_override_rule(std::string_view s);

std::optional<Stage> try_parse_stage(std::string_view s);

constexpr Role role_of(AgentId a) {
  return a == AgentId::Alex ? Role::Demander : Role::Withdrawer;
}

constexpr AgentId partner_of(AgentId a) {
  return a == AgentId::Alex ? AgentId::Jordan : AgentId::Alex;
}

constexpr Speaker as_speaker(AgentId a) {
  return a == AgentId::Alex ? Speaker::Alex : Speaker::Jordan;
}

constexpr Addressee as_addressee(AgentId a) {
  return a == AgentId::Alex ? Addressee::Alex : Addressee::Jordan;
}

constexpr std::optional<AgentId> agent_of(Speaker s) {
  switch (s) {
    case Speaker::Alex: return AgentId::Alex;
    case Speaker::Jordan: return AgentId::Jordan;
    case Speaker::Therapist: return std::nullopt;
  }
  return std::nullopt;
}

constexpr bool is_agent(Speaker s) { return s != Speaker::Therapist; }

}  // namespace couplesim

#include "couplesim/engine/types.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

namespace couplesim {
namespace {

template <class E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Stage, 6> kStageNames{{
    {Stage::Greeting, "Greeting"},
    {Stage::ProblemRaising, "ProblemRaising"},
    {Stage::Escalation, "Escalation"},
    {Stage::DeEscalation, "DeEscalation"},
    {Stage::Enactment, "Enactment"},
    {Stage::WrapUp, "WrapUp"},
}};

constexpr NameTable<Stage, 6> kStageDisplay{{
    {Stage::Greeting, "Greeting"},
    {Stage::ProblemRaising, "Problem Raising"},
    {Stage::Escalation, "Escalation"},
    {Stage::DeEscalation, "De-Escalation"},
    {Stage::Enactment, "Enactment"},
    {Stage::WrapUp, "Wrap-up"},
}};

constexpr NameTable<AgentId, 2> kAgentNames{{{AgentId::Alex, "Alex"}, {AgentId::Jordan, "Jordan"}}};

constexpr NameTable<Role, 2> kRoleNames{{{Role::Demander, "Demander"}, {Role::Withdrawer, "Withdrawer"}}};

constexpr NameTable<Emotion, 11> kEmotionNames{{
    {Emotion::Neutral, "Neutral"},
    {Emotion::Sad, "Sad"},
    {Emotion::Angry, "Angry"},
    {Emotion::Hopeful, "Hopeful"},
    {Emotion::Vulnerable, "Vulnerable"},
    {Emotion::Relieved, "Relieved"},
    {Emotion::Anxious, "Anxious"},
    {Emotion::Cautious, "Cautious"},
    {Emotion::Open, "Open"},
    {Emotion::Calm, "Calm"},
    {Emotion::Defensive, "Defensive"},
}};

constexpr NameTable<Addressee, 4> kAddresseeNames{{
    {Addressee::Alex, "Alex"},
    {Addressee::Jordan, "Jordan"},
    {Addressee::Both, "Both"},
    {Addressee::Therapist, "Therapist"},
}};

constexpr NameTable<Speaker, 3> kSpeakerNames{{
    {Speaker::Alex, "Alex"}, {Speaker::Jordan, "Jordan"}, {Speaker::Therapist, "Therapist"}}};

constexpr NameTable<Difficulty, 3> kDifficultyNames{{
    {Difficulty::Easy, "Easy"}, {Difficulty::Normal, "Normal"}, {Difficulty::Hard, "Hard"}}};

constexpr NameTable<OverrideRule, 5> kOverrideNames{{
    {OverrideRule::None, "none"},
    {OverrideRule::TurnGate, "TurnGate"},
    {OverrideRule::ForceEscalation, "ForceEscalation"},
    {OverrideRule::ForceDeEscalation, "ForceDeEscalation"},
    {OverrideRule::WrapUpAbsorbing, "WrapUpAbsorbing"},
}};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

template <class E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table)
    if (e == value) return name;
  return "?";
}

template <class E, std::size_t N>
std::optional<E> find_name(const NameTable<E, N>& table, std::string_view s) {
  for (const auto& [e, name] : table)
    if (iequals(name, s)) return e;
  return std::nullopt;
}

template <class E, std::size_t N>
E parse_or_throw(const NameTable<E, N>& table, std::string_view s, const char* what) {
  if (auto e = find_name(table, s)) return *e;
  throw ParseError(std::string("unknown ") + what + ": '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Stage s) { return name_of(kStageNames, s); }
std::string_view to_string(AgentId a) { return name_of(kAgentNames, a); }
std::string_view to_string(Role r) { return name_of(kRoleNames, r); }
std::string_view to_string(Emotion e) { return name_of(kEmotionNames, e); }
std::string_view to_string(Addressee a) { return name_of(kAddresseeNames, a); }
std::string_view to_string(Speaker s) { return name_of(kSpeakerNames, s); }
std::string_view to_string(Difficulty d) { return name_of(kDifficultyNames, d); }
std::string_view to_string(OverrideRule r) { return name_of(kOverrideNames, r); }

std::string_view display_name(Stage s) { return name_of(kStageDisplay, s); }

std::optional<Stage> try_parse_stage(std::string_view s) {
  if (auto st = find_name(kStageNames, s)) return st;
  return find_name(kStageDisplay, s);
}

Stage parse_stage(std::string_view s) {
  if (auto st = try_parse_stage(s)) return *st;
  throw ParseError("unknown stage: '" + std::string(s) + "'");
}

AgentId parse_agent(std::string_view s) { return parse_or_throw(kAgentNames, s, "agent"); }
Emotion parse_emotion(std::string_view s) { return parse_or_throw(kEmotionNames, s, "emotion"); }
Addressee parse_addressee(std::string_view s) { return parse_or_throw(kAddresseeNames, s, "addressee"); }
Speaker parse_speaker(std::string_view s) { return parse_or_throw(kSpeakerNames, s, "speaker"); }
Difficulty parse_difficulty(std::string_view s) { return parse_or_throw(kDifficultyNames, s, "difficulty"); }
OverrideRule parse_override_rule(std::string_view s) { return parse_or_throw(kOverrideNames, s, "override rule"); }

}  // namespace couplesim

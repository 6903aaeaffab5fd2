#include "couplesim/engine/rules.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

#include "couplesim/util/text.hpp"

namespace couplesim {
namespace {

// ---- accusation ----------------------------------------------------------

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

// ---- stage heuristic markers -----------------------------------------------
// A trailing '*' makes the marker a word-prefix match.

using Markers = std::vector<std::string_view>;

const Markers kGreetingMarkers = {"hi", "hello", "hey", "how are you", "good morning", "good afternoon",
                                  "good evening", "welcome", "nice to meet", "good to see", "thanks for coming",
                                  "how's it going", "how are things"};

const Markers kIssueMarkers = {"problem*", "issue*", "concern*", "brought you", "brings you", "bring you",
                               "come up", "came up", "going on", "bother*", "complain*", "frustrat*",
                               "upset", "happened", "tell me about", "talk about", "affair", "depress*",
                               "trust", "carrying everything", "nothing changes"};

const Markers kBlameMarkers = {"you always", "you never", "your fault", "blame*", "whatever", "ridiculous",
                               "sick of", "tired of", "can't stand", "how dare", "unbelievable",
                               "you don't care", "you don't even", "not my fault", "nag*", "liar", "lying",
                               "selfish", "shut up", "leave me alone", "exaggerat*", "yell*", "not true",
                               "here we go", "villain", "good enough", "roll your eyes", "done talking",
                               "come at me", "every time"};

const Markers kCalmingMarkers = {"slow down", "let's slow", "stop", "calm down", "take a breath", "deep breath",
                                 "pause", "step back", "i hear", "sounds like", "that makes sense",
                                 "i understand", "what are you feeling", "how does that feel",
                                 "how do you feel", "what do you feel", "underneath", "i wonder", "validat*"};

const Markers kEnactmentPromptMarkers = {"tell each other", "tell jordan", "tell alex", "turn to jordan",
                                         "turn to alex", "turn toward", "say that to jordan", "say that to alex",
                                         "share with jordan", "share with alex", "speak to jordan",
                                         "speak to alex", "talk to jordan", "talk to alex", "directly to"};

const Markers kVulnerableMarkers = {"scared", "afraid", "fear*", "lonely", "alone", "ashamed", "shame",
                                    "i miss", "miss you", "need you", "close to you", "closeness", "hurt",
                                    "hurts", "i freeze", "vulnerable", "i'm sorry", "sad"};

const Markers kClosingMarkers = {"wrap up", "wrap things up", "wrapping up", "out of time", "time is up",
                                 "end the session", "end our session", "next session", "next time",
                                 "next week", "see you", "goodbye", "bye", "until next", "for today",
                                 "summarize", "before we finish", "homework"};

int count_markers(const std::string& padded, const Markers& markers) {
  int hits = 0;
  for (auto m : markers) {
    std::string needle = " ";
    if (m.back() == '*') {
      needle.append(m.substr(0, m.size() - 1));
    } else {
      needle.append(m);
      needle.push_back(' ');
    }
    if (contains(padded, needle)) ++hits;
  }
  return hits;
}

// ---- names ------------------------------------------------------------------

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

bool vocative_at(std::string_view text, std::size_t pos, std::size_t len) {
  const auto after = pos + len;
  if (after < text.size()) {
    char c = text[after];
    if (c == ',' || c == '.' || c == '?' || c == '!' || c == ';' || c == ':') return true;
  } else {
    return true;
  }
  auto before = util::trim(text.substr(0, pos));
  if (before.empty()) return true;
  static constexpr std::array<std::string_view, 11> kLeadIns = {"hi", "hello", "hey", "thanks", "thank you", "ok",
                                                                "okay", "so", "now", "well", "alright"};
  std::string lead;
  for (char c : before)
    if (is_word_char(c) || c == ' ') lead.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  lead = std::string(util::trim(lead));
  return std::find(kLeadIns.begin(), kLeadIns.end(), lead) != kLeadIns.end();
}

bool name_vocative(std::string_view text, std::string_view name) {
  const auto lower = util::to_lower(text);
  for (auto pos = lower.find(name); pos != std::string::npos; pos = lower.find(name, pos + 1)) {
    const bool left_ok = pos == 0 || !is_word_char(lower[pos - 1]);
    const auto after = pos + name.size();
    const bool right_ok = after >= lower.size() || !is_word_char(lower[after]);
    if (left_ok && right_ok && vocative_at(text, pos, name.size())) return true;
  }
  return false;
}

bool has_second_person(std::string_view text) {
  const auto padded = util::word_padded(text);
  for (auto w : {" you ", " your ", " you're ", " yours ", " yourself ", " you've ", " you'd ", " you'll "})
    if (contains(padded, w)) return true;
  return false;
}

}  // namespace

AccusatoryLexicon::AccusatoryLexicon() : phrases_{"you always", "you never"} {}

AccusatoryLexicon::AccusatoryLexicon(std::vector<std::string> phrases) {
  for (auto& p : phrases) extend(std::move(p));
}

AccusatoryLexicon& AccusatoryLexicon::extend(std::string phrase) {
  auto norm = util::normalize_whitespace(phrase);
  if (!norm.empty() && std::find(phrases_.begin(), phrases_.end(), norm) == phrases_.end())
    phrases_.push_back(std::move(norm));
  return *this;
}

bool detect_accusatory(std::string_view text, const AccusatoryLexicon& lexicon) {
  const auto norm = util::normalize_whitespace(text);
  return std::any_of(lexicon.phrases().begin(), lexicon.phrases().end(),
                     [&](const std::string& p) { return contains(norm, p); });
}

Emotion emotion_for(AgentId agent, Stage stage) {
  static constexpr std::array<Emotion, 6> kAlex = {Emotion::Neutral, Emotion::Sad,        Emotion::Angry,
                                                   Emotion::Hopeful, Emotion::Vulnerable, Emotion::Relieved};
  static constexpr std::array<Emotion, 6> kJordan = {Emotion::Neutral,  Emotion::Anxious, Emotion::Sad,
                                                     Emotion::Cautious, Emotion::Open,    Emotion::Calm};
  const auto i = static_cast<std::size_t>(stage);
  return agent == AgentId::Alex ? kAlex[i] : kJordan[i];
}

HardRuleResult apply_hard_rules(Stage proposed, int therapist_turn, std::span<const StageDecision> history,
                                bool wrapped_up) {
  const Stage current = history.empty() ? Stage::Greeting : history.back().final_stage;

  if (wrapped_up) return {Stage::WrapUp, OverrideRule::WrapUpAbsorbing};

  if (therapist_turn <= kEscalationGateTurn && proposed == Stage::Escalation) {
    auto prev = std::find_if(history.rbegin(), history.rend(),
                             [](const StageDecision& d) { return d.final_stage != Stage::Escalation; });
    return {prev == history.rend() ? Stage::Greeting : prev->final_stage, OverrideRule::TurnGate};
  }

  const bool escalated_before = std::any_of(history.begin(), history.end(), [](const StageDecision& d) {
    return d.final_stage == Stage::Escalation;
  });
  if (therapist_turn >= kForceEscalationTurn && !escalated_before && current == Stage::ProblemRaising)
    return {Stage::Escalation, OverrideRule::ForceEscalation};

  if (history.size() >= kMaxConsecutiveEscalation &&
      std::all_of(history.end() - kMaxConsecutiveEscalation, history.end(),
                  [](const StageDecision& d) { return d.final_stage == Stage::Escalation; }))
    return {Stage::DeEscalation, OverrideRule::ForceDeEscalation};

  return {proposed, OverrideRule::None};
}

HardRuleResult apply_hard_rules(Stage proposed, const Session& session) {
  return apply_hard_rules(proposed, session.therapist_turns, session.stage_history, session.wrapped_up);
}

Stage classify_stage_fallback(std::span<const Utterance> context, std::span<const Stage> history) {
  // Newest therapist message, and the one before it.
  std::ptrdiff_t trigger = -1, previous = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(context.size()) - 1; i >= 0; --i) {
    if (context[i].speaker != Speaker::Therapist) continue;
    if (trigger < 0) {
      trigger = i;
    } else {
      previous = i;
      break;
    }
  }

  int greeting = 0, issue = 0, blame = 0, calming = 0, enactment = 0, closing = 0;
  if (trigger >= 0) {
    const auto padded = util::word_padded(context[trigger].text);
    greeting += count_markers(padded, kGreetingMarkers);
    issue += 2 * count_markers(padded, kIssueMarkers);
    calming += 3 * count_markers(padded, kCalmingMarkers);
    enactment += 3 * count_markers(padded, kEnactmentPromptMarkers);
    closing += 3 * count_markers(padded, kClosingMarkers);
  }
  for (std::ptrdiff_t i = previous + 1; i < static_cast<std::ptrdiff_t>(context.size()); ++i) {
    const auto& u = context[i];
    if (!is_agent(u.speaker)) continue;
    const auto padded = util::word_padded(u.text);
    greeting += count_markers(padded, kGreetingMarkers);
    issue += count_markers(padded, kIssueMarkers);
    blame += count_markers(padded, kBlameMarkers);
    const bool to_partner = u.addressee != Addressee::Therapist && u.addressee != Addressee::Both;
    enactment += (to_partner ? 2 : 1) * count_markers(padded, kVulnerableMarkers);
  }

  // Guideline order: 2 issue, 3 blame, 4 calming, 5 vulnerability, 5 closing.
  const std::array<std::pair<Stage, int>, 5> scored = {{{Stage::ProblemRaising, issue},
                                                        {Stage::Escalation, blame},
                                                        {Stage::DeEscalation, calming},
                                                        {Stage::Enactment, enactment},
                                                        {Stage::WrapUp, closing}}};
  auto best = scored.front();
  for (const auto& s : scored)
    if (s.second > best.second) best = s;
  if (best.second > 0) return best.first;

  const bool only_greeting_so_far =
      std::all_of(history.begin(), history.end(), [](Stage s) { return s == Stage::Greeting; });
  if (only_greeting_so_far) return Stage::Greeting;
  (void)greeting;  // greetings never pull a session back to the opening stage
  return history.back();
}

std::optional<Addressee> addressed_by_name(std::string_view text) {
  const bool alex = name_vocative(text, "alex");
  const bool jordan = name_vocative(text, "jordan");
  if (alex && jordan) return Addressee::Both;
  if (alex) return Addressee::Alex;
  if (jordan) return Addressee::Jordan;
  return std::nullopt;
}

Addressee determine_next_speaker(std::span<const Utterance> context, Stage stage,
                                 std::optional<Addressee> explicit_addressee, const SpeakerOracle& oracle,
                                 const AccusatoryLexicon& lexicon) {
  if (context.empty()) throw std::invalid_argument("determine_next_speaker: empty context");
  const auto& last = context.back();

  if (last.speaker == Speaker::Therapist) {
    if (explicit_addressee && *explicit_addressee != Addressee::Therapist) return *explicit_addressee;
    if (auto named = addressed_by_name(last.text)) return *named;
    return Addressee::Both;
  }

  const AgentId self = *agent_of(last.speaker);
  const Addressee partner = as_addressee(partner_of(self));
  if (detect_accusatory(last.text, lexicon)) return partner;
  if (last.addressee == partner) return partner;
  if (auto named = addressed_by_name(last.text); named && (*named == partner || *named == Addressee::Both))
    return partner;
  if (has_second_person(last.text)) {
    if (oracle) {
      auto verdict = oracle(context, stage);
      if (verdict && (*verdict == partner || *verdict == Addressee::Therapist)) return *verdict;
    }
    return Addressee::Therapist;
  }
  return Addressee::Therapist;
}

}  // namespace couplesim

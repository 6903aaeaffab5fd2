#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "couplesim/engine/session.hpp"
#include "couplesim/gateway/gateway.hpp"
#include "couplesim/gateway/scripted_backend.hpp"
#include "couplesim/prompts/prompt_library.hpp"

namespace couplesim::eval {

enum class JudgeKind { Role, Stage, Consistency };
std::string_view to_string(JudgeKind k);

// One therapist message and the agent lines that followed it.
struct TurnSample {
  std::string session_id;
  Stage stage = Stage::Greeting;
  std::string therapist_message;
  std::vector<Utterance> responses;
};

// One agent line with the conversation that preceded it.
struct LineSample {
  std::string session_id;
  std::string scenario;
  Utterance line;
  std::vector<Utterance> history;
};

// Splits a transcript into therapist turns; turns without agent lines are skipped.
std::vector<TurnSample> split_turns(const Session& session);

struct PairVerdict {
  std::optional<bool> alex;  // absent when the agent did not speak in the turn
  std::optional<bool> jordan;
};

struct ConsistencyVerdict {
  bool consistent = true;
  std::vector<std::int64_t> conflicting;  // earlier utterances of the same speaker
  std::string reasoning;
};

struct JudgeResult {
  bool scored = false;
  int attempts = 0;
  std::optional<PairVerdict> pair;
  std::optional<ConsistencyVerdict> consistency;
  std::string error;  // last parse failure when unscored
};

class MalformedJudgeOutput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Strict parsers; throw MalformedJudgeOutput.
PairVerdict parse_pair_verdict(JudgeKind kind, std::string_view raw);
ConsistencyVerdict parse_consistency_verdict(std::string_view raw);

std::string render_turn_prompt(const prompts::PromptLibrary& lib, JudgeKind kind, const TurnSample& turn);
std::string render_line_prompt(const prompts::PromptLibrary& lib, const LineSample& sample);

// Role or Stage judgment of a turn. Malformed output is re-asked once with a
// format reminder; a second failure leaves the turn unscored. Gateway errors
// also leave the turn unscored.
JudgeResult judge_turn(gateway::ModelGateway& gw, const prompts::PromptLibrary& lib, JudgeKind kind,
                       const TurnSample& turn);
JudgeResult judge_line(gateway::ModelGateway& gw, const prompts::PromptLibrary& lib, const LineSample& sample);

// Offline judge: a line fits an agent's role when it comes from one of that
// agent's banks, and fits the stage when it comes from the bank of the
// judged stage. Lines found in no bank are rated No. Consistency is always
// judged consistent.
void install_scripted_judge(gateway::ScriptedBackend& backend);

}  // namespace couplesim::eval

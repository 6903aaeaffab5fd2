#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "couplesim/engine/types.hpp"

namespace couplesim {

struct Scenario {
  std::string id;           // "s1", "s2", or "custom"
  std::string description;  // free text handed to the agents
};

struct Utterance {
  std::int64_t index = 0;
  Speaker speaker = Speaker::Therapist;
  Addressee addressee = Addressee::Both;
  std::string text;
  std::optional<Emotion> emotion;  // present iff speaker is an agent
  Stage stage = Stage::Greeting;   // stage at emission
  std::int64_t ts_ms = 0;
};

// Bounded partner-to-partner loop. One exchange is one agent utterance
// answered by the other agent.
struct A2ALoopState {
  bool active = false;
  int remaining_exchanges = 0;
  Stage stage_bound = Stage::Greeting;
  AgentId accuser = AgentId::Alex;
  bool half_exchange = false;  // first half of the current exchange emitted
  bool grace = false;          // Hard-difficulty interrupt: finish one exchange, then stop

  // Agent that speaks next inside the loop: the accused answers first.
  AgentId next_speaker() const { return half_exchange ? accuser : partner_of(accuser); }
};

struct StageDecision {
  Stage proposed = Stage::Greeting;
  Stage final_stage = Stage::Greeting;
  OverrideRule override_rule = OverrideRule::None;
  int therapist_turn = 0;
  bool used_fallback = false;  // classifier gateway unavailable; heuristic used

  friend bool operator==(const StageDecision&, const StageDecision&) = default;
};

struct Session {
  std::string id;
  Scenario scenario;
  Difficulty difficulty = Difficulty::Normal;
  std::vector<Utterance> transcript;
  std::vector<StageDecision> stage_history;
  Stage current_stage = Stage::Greeting;
  int therapist_turns = 0;
  A2ALoopState a2a;
  bool wrapped_up = false;

  std::int64_t next_index() const {
    return transcript.empty() ? 0 : transcript.back().index + 1;
  }
};

}  // namespace couplesim

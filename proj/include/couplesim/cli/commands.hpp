#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "couplesim/cli/config.hpp"
#include "couplesim/engine/session.hpp"

namespace couplesim::cli {

// ---- replay -----------------------------------------------------------------

struct ReplayTurn {
  std::string text;
  std::optional<Addressee> addressee;
  std::int64_t pre_delay_ms = 0;  // advances the replay clock
  std::optional<Stage> stage;     // scripted classifier proposal for this turn
  std::optional<int> interrupt_after;  // interrupt an a2a loop after this many loop lines
};

struct ReplayScript {
  std::string scenario = "s1";  // built-in id, or free text when custom is set
  bool custom = false;
  Difficulty difficulty = Difficulty::Normal;
  std::uint64_t seed = 0;  // offsets the scripted banks
  std::vector<ReplayTurn> turns;
};

// {"scenario": "s1" | "custom_text": "...", "difficulty": "normal", "seed": 0,
//  "turns": [{"text": "...", "addressee": "Both", "pre_delay_ms": 0, "stage": "Escalation",
//             "interrupt_after": 2}]}
// Throws UsageError on invalid scripts.
ReplayScript parse_replay_script(const nlohmann::json& j);
ReplayScript load_replay_script(const std::filesystem::path& file);

struct ReplayResult {
  Session session;
  std::string digest;
};

// Deterministic run against the scripted backend: stage proposals come from
// the script or the fallback heuristic, and timestamps from a synthetic clock.
ReplayResult run_replay(const ReplayScript& script, const Config& cfg = {}, const std::string& session_id = "replay");

// ---- commands (streams are injectable for tests) ------------------------------

struct PlayOptions {
  std::string scenario = "s1";
  std::optional<std::string> custom_text;
  Difficulty difficulty = Difficulty::Normal;
  BackendKind backend = BackendKind::Scripted;
  std::optional<std::filesystem::path> out;  // directory for the session files
  bool auto_a2a = false;                     // run loops without pausing at exchange boundaries
};
int cmd_play(const PlayOptions& opts, const Config& cfg, std::istream& in, std::ostream& out, std::ostream& err);

struct ReplayOptions {
  std::filesystem::path script;
  BackendKind backend = BackendKind::Scripted;
  std::optional<std::filesystem::path> out;
};
int cmd_replay(const ReplayOptions& opts, const Config& cfg, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> annotations;
  std::optional<std::filesystem::path> baseline;
  std::optional<BackendKind> judge = BackendKind::Scripted;  // nullopt: skip judging
  std::optional<std::filesystem::path> out;
  bool consistency = true;
  bool yates = true;
};
int cmd_eval(const EvalOptions& opts, const Config& cfg, std::ostream& out, std::ostream& err);

int cmd_serve(const Config& cfg, std::ostream& out, std::ostream& err);

}  // namespace couplesim::cli

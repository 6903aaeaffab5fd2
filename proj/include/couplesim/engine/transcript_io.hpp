#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "couplesim/engine/session.hpp"

namespace couplesim {

// On-disk layout per session, inside one directory:
//   <id>.jsonl  one record per utterance: {index, speaker, addressee, text, emotion?, stage, ts_ms}
//   <id>.json   sidecar: {session_id, scenario_id, scenario_text, difficulty, closed,
//                         stage_history:[{turn, proposed, final, override}]}

nlohmann::json to_json(const Utterance& u);
Utterance utterance_from_json(const nlohmann::json& j);

nlohmann::json to_json(const StageDecision& d);
StageDecision decision_from_json(const nlohmann::json& j);

nlohmann::json sidecar_json(const Session& s, bool closed = false);

std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path sidecar_path(const std::filesystem::path& dir, const std::string& id);

// One JSONL line (without the newline).
std::string transcript_line(const Utterance& u);

void write_sidecar(const std::filesystem::path& dir, const Session& s, bool closed = false);
void append_transcript(const std::filesystem::path& dir, const std::string& id, const Utterance& u);
// Rewrites both files from scratch.
void write_session(const std::filesystem::path& dir, const Session& s, bool closed = false);

struct LoadedSession {
  Session session;
  bool closed = false;
};

// Rebuilds a session from its files: transcript, stage history, current
// stage, wrapped_up and therapist_turns. The a2a loop is always inactive.
// A transcript whose final line is truncated (crash mid-write) loses that
// line. Throws std::runtime_error on missing or unparseable files.
LoadedSession read_session(const std::filesystem::path& dir, const std::string& id);

std::vector<Utterance> read_transcript(const std::filesystem::path& file);

// Canonical form used for replay digests: one record per line with sorted
// keys, no ts_ms, LF endings, followed by the stage history in the same form.
std::string canonical_transcript(const Session& s);
std::string transcript_digest(const Session& s);

}  // namespace couplesim

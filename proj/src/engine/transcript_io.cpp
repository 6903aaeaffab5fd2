#include "couplesim/engine/transcript_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "couplesim/util/sha256.hpp"

namespace couplesim {

using json = nlohmann::json;

json to_json(const Utterance& u) {
  json j = {{"index", u.index},
            {"speaker", to_string(u.speaker)},
            {"addressee", to_string(u.addressee)},
            {"text", u.text},
            {"stage", to_string(u.stage)},
            {"ts_ms", u.ts_ms}};
  if (u.emotion) j["emotion"] = to_string(*u.emotion);
  return j;
}

Utterance utterance_from_json(const json& j) {
  Utterance u;
  u.index = j.at("index").get<std::int64_t>();
  u.speaker = parse_speaker(j.at("speaker").get<std::string>());
  u.addressee = parse_addressee(j.at("addressee").get<std::string>());
  u.text = j.at("text").get<std::string>();
  if (auto it = j.find("emotion"); it != j.end() && !it->is_null())
    u.emotion = parse_emotion(it->get<std::string>());
  u.stage = parse_stage(j.at("stage").get<std::string>());
  u.ts_ms = j.value("ts_ms", std::int64_t{0});
  return u;
}

json to_json(const StageDecision& d) {
  return {{"turn", d.therapist_turn},
          {"proposed", to_string(d.proposed)},
          {"final", to_string(d.final_stage)},
          {"override", to_string(d.override_rule)},
          {"fallback", d.used_fallback}};
}

StageDecision decision_from_json(const json& j) {
  StageDecision d;
  d.therapist_turn = j.at("turn").get<int>();
  d.proposed = parse_stage(j.at("proposed").get<std::string>());
  d.final_stage = parse_stage(j.at("final").get<std::string>());
  d.override_rule = parse_override_rule(j.value("override", std::string("none")));
  d.used_fallback = j.value("fallback", false);
  return d;
}

json sidecar_json(const Session& s, bool closed) {
  json history = json::array();
  for (const auto& d : s.stage_history) history.push_back(to_json(d));
  return {{"session_id", s.id},
          {"scenario_id", s.scenario.id},
          {"scenario_text", s.scenario.description},
          {"difficulty", to_string(s.difficulty)},
          {"closed", closed},
          {"stage_history", std::move(history)}};
}

std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / (id + ".jsonl");
}

std::filesystem::path sidecar_path(const std::filesystem::path& dir, const std::string& id) {
  return dir / (id + ".json");
}

std::string transcript_line(const Utterance& u) { return to_json(u).dump(); }

namespace {

void write_file_atomically(const std::filesystem::path& target, const std::string& content) {
  auto tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace

void write_sidecar(const std::filesystem::path& dir, const Session& s, bool closed) {
  write_file_atomically(sidecar_path(dir, s.id), sidecar_json(s, closed).dump(2) + "\n");
}

void append_transcript(const std::filesystem::path& dir, const std::string& id, const Utterance& u) {
  std::ofstream out(transcript_path(dir, id), std::ios::binary | std::ios::app);
  if (!out) throw std::runtime_error("cannot append to transcript of " + id);
  out << transcript_line(u) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("transcript write failed for " + id);
}

void write_session(const std::filesystem::path& dir, const Session& s, bool closed) {
  std::string body;
  for (const auto& u : s.transcript) body += transcript_line(u) + "\n";
  write_file_atomically(transcript_path(dir, s.id), body);
  write_sidecar(dir, s, closed);
}

std::vector<Utterance> read_transcript(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  std::vector<Utterance> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(utterance_from_json(json::parse(lines[i])));
    } catch (const std::exception& e) {
      if (i + 1 == lines.size()) break;  // torn final write
      throw std::runtime_error(file.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

LoadedSession read_session(const std::filesystem::path& dir, const std::string& id) {
  std::ifstream in(sidecar_path(dir, id));
  if (!in) throw std::runtime_error("no sidecar for session " + id);
  json side;
  try {
    side = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("sidecar for " + id + " is unreadable: " + e.what());
  }

  LoadedSession out;
  Session& s = out.session;
  s.id = side.value("session_id", id);
  s.scenario.id = side.value("scenario_id", std::string{});
  s.scenario.description = side.value("scenario_text", std::string{});
  s.difficulty = parse_difficulty(side.value("difficulty", std::string("Normal")));
  for (const auto& d : side.value("stage_history", json::array())) s.stage_history.push_back(decision_from_json(d));
  out.closed = side.value("closed", false);

  if (std::filesystem::exists(transcript_path(dir, id))) s.transcript = read_transcript(transcript_path(dir, id));
  for (const auto& u : s.transcript)
    if (u.speaker == Speaker::Therapist) ++s.therapist_turns;
  s.current_stage = s.stage_history.empty() ? Stage::Greeting : s.stage_history.back().final_stage;
  for (const auto& d : s.stage_history)
    if (d.final_stage == Stage::WrapUp) s.wrapped_up = true;
  return out;
}

std::string canonical_transcript(const Session& s) {
  std::string out;
  for (const auto& u : s.transcript) {
    auto j = to_json(u);
    j.erase("ts_ms");
    out += j.dump() + "\n";
  }
  for (const auto& d : s.stage_history) out += to_json(d).dump() + "\n";
  return out;
}

std::string transcript_digest(const Session& s) { return util::sha256_hex(canonical_transcript(s)); }

}  // namespace couplesim

#include "couplesim/eval/judge.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "couplesim/engine/engine.hpp"
#include "couplesim/util/text.hpp"

namespace couplesim::eval {

using json = nlohmann::json;

std::string_view to_string(JudgeKind k) {
  switch (k) {
    case JudgeKind::Role: return "role";
    case JudgeKind::Stage: return "stage";
    case JudgeKind::Consistency: return "consistency";
  }
  return "?";
}

namespace {

constexpr std::string_view kResponsesMarker = "Agent responses:";
constexpr std::string_view kPairReminder =
    "\n\nYour previous reply could not be parsed. Return only the JSON object, no extra text.";
constexpr std::string_view kListReminder =
    "\n\nYour previous reply could not be parsed. Give one sentence of reasoning followed by a list of "
    "indices such as [3, 7], or [] when there is no conflict.";

std::string purpose_of(JudgeKind k) { return "judge_" + std::string(to_string(k)); }

std::string_view strip_fences(std::string_view s) {
  s = util::trim(s);
  if (s.substr(0, 3) == "```") {
    auto nl = s.find('\n');
    auto close = s.rfind("```");
    if (nl != std::string_view::npos && close != std::string_view::npos && close > nl)
      s = util::trim(s.substr(nl + 1, close - nl - 1));
  }
  return s;
}

bool parse_rating(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_object() || !it->contains("rating") || !(*it)["rating"].is_string())
    throw MalformedJudgeOutput(std::string("missing ") + key + ".rating");
  const auto rating = util::to_lower(util::trim((*it)["rating"].get<std::string>()));
  if (rating == "yes") return true;
  if (rating == "no") return false;
  throw MalformedJudgeOutput(std::string(key) + ".rating is neither Yes nor No");
}

std::string format_responses(std::span<const Utterance> responses) {
  std::string out;
  for (const auto& u : responses) {
    if (!out.empty()) out += "\n    ";
    std::string text = u.text;
    std::replace(text.begin(), text.end(), '\n', ' ');
    out += std::string(to_string(u.speaker)) + ": " + text;
  }
  return out;
}

// Agent lines listed after the "Agent responses:" marker of a judge prompt.
std::vector<std::pair<AgentId, std::string>> responses_in_prompt(std::string_view prompt) {
  std::vector<std::pair<AgentId, std::string>> out;
  auto at = prompt.find(kResponsesMarker);
  if (at == std::string_view::npos) return out;
  for (const auto& raw : util::split_lines(prompt.substr(at + kResponsesMarker.size()))) {
    auto line = util::trim(raw);
    for (auto agent : kAllAgents) {
      const auto prefix = std::string(to_string(agent)) + ": ";
      if (line.substr(0, prefix.size()) == prefix) out.emplace_back(agent, std::string(line.substr(prefix.size())));
    }
  }
  return out;
}

std::optional<Stage> stage_in_prompt(std::string_view prompt) {
  constexpr std::string_view kStage = "Stage:";
  for (const auto& raw : util::split_lines(prompt)) {
    auto line = util::trim(raw);
    if (line.substr(0, kStage.size()) == kStage) return try_parse_stage(util::trim(line.substr(kStage.size())));
  }
  return std::nullopt;
}

}  // namespace

std::vector<TurnSample> split_turns(const Session& session) {
  std::vector<TurnSample> out;
  std::optional<TurnSample> cur;
  auto flush = [&] {
    if (cur && !cur->responses.empty()) out.push_back(std::move(*cur));
    cur.reset();
  };
  for (const auto& u : session.transcript) {
    if (u.speaker == Speaker::Therapist) {
      flush();
      cur = TurnSample{session.id, u.stage, u.text, {}};
    } else if (cur) {
      if (cur->responses.empty()) cur->stage = u.stage;  // stage after the controller ran
      cur->responses.push_back(u);
    }
  }
  flush();
  return out;
}

PairVerdict parse_pair_verdict(JudgeKind kind, std::string_view raw) {
  json j;
  try {
    j = json::parse(strip_fences(raw));
  } catch (const json::exception& e) {
    throw MalformedJudgeOutput(std::string("not JSON: ") + e.what());
  }
  if (!j.is_object()) throw MalformedJudgeOutput("expected a JSON object");
  const bool role = kind == JudgeKind::Role;
  PairVerdict v;
  v.alex = parse_rating(j, role ? "alex_role" : "alex_stage_behavior");
  v.jordan = parse_rating(j, role ? "jordan_role" : "jordan_stage_behavior");
  return v;
}

ConsistencyVerdict parse_consistency_verdict(std::string_view raw) {
  auto text = strip_fences(raw);
  const auto close = text.rfind(']');
  const auto open = close == std::string_view::npos ? std::string_view::npos : text.rfind('[', close);
  if (open == std::string_view::npos || !util::trim(text.substr(close + 1)).empty())
    throw MalformedJudgeOutput("no trailing index list");
  json list;
  try {
    list = json::parse(text.substr(open, close - open + 1));
  } catch (const json::exception& e) {
    throw MalformedJudgeOutput(std::string("index list is not JSON: ") + e.what());
  }
  ConsistencyVerdict v;
  for (const auto& e : list) {
    if (!e.is_number_integer()) throw MalformedJudgeOutput("index list must hold integers");
    v.conflicting.push_back(e.get<std::int64_t>());
  }
  v.reasoning = std::string(util::trim(text.substr(0, open)));
  v.consistent = v.conflicting.empty();
  return v;
}

std::string render_turn_prompt(const prompts::PromptLibrary& lib, JudgeKind kind, const TurnSample& turn) {
  prompts::Bindings b = {{"stage", std::string(display_name(turn.stage))},
                         {"therapist_message", turn.therapist_message},
                         {"agent_responses", format_responses(turn.responses)}};
  if (kind == JudgeKind::Role) {
    b["alex_profile"] = prompts::agent_profile(lib, AgentId::Alex);
    b["jordan_profile"] = prompts::agent_profile(lib, AgentId::Jordan);
    return lib.render(prompts::TemplateId::JudgeRole, b);
  }
  if (kind != JudgeKind::Stage) throw std::invalid_argument("render_turn_prompt: Role or Stage only");
  b["alex_stage_behaviors"] = prompts::stage_behavior(lib, AgentId::Alex, turn.stage);
  b["jordan_stage_behaviors"] = prompts::stage_behavior(lib, AgentId::Jordan, turn.stage);
  return lib.render(prompts::TemplateId::JudgeStage, b);
}

std::string render_line_prompt(const prompts::PromptLibrary& lib, const LineSample& sample) {
  const AgentId agent = *agent_of(sample.line.speaker);
  const std::string name(to_string(agent));
  return lib.render(prompts::TemplateId::JudgeConsistency,
                    {{"scenario", sample.scenario},
                     {"speaker_name", name},
                     {"speaker_backstory", prompts::agent_profile(lib, agent)},
                     {"speaker_role", name},
                     {"conversation", sample.history.empty() ? "(no earlier lines)" : format_context(sample.history)},
                     {"speaker_line", sample.line.text}});
}

JudgeResult judge_turn(gateway::ModelGateway& gw, const prompts::PromptLibrary& lib, JudgeKind kind,
                       const TurnSample& turn) {
  JudgeResult r;
  const auto prompt = render_turn_prompt(lib, kind, turn);
  for (int attempt = 0; attempt < 2; ++attempt) {
    gateway::GatewayRequest req;
    req.kind = gateway::RequestKind::Completion;
    req.prompt = attempt == 0 ? prompt : prompt + std::string(kPairReminder);
    req.temperature = 0.0;
    req.max_tokens = 200;
    req.purpose = purpose_of(kind);
    ++r.attempts;
    try {
      auto v = parse_pair_verdict(kind, gw.send(req).text);
      const auto spoke = [&](Speaker s) {
        return std::any_of(turn.responses.begin(), turn.responses.end(), [&](const Utterance& u) { return u.speaker == s; });
      };
      if (!spoke(Speaker::Alex)) v.alex.reset();
      if (!spoke(Speaker::Jordan)) v.jordan.reset();
      r.pair = v;
      r.scored = true;
      return r;
    } catch (const MalformedJudgeOutput& e) {
      r.error = e.what();
    } catch (const gateway::GatewayError& e) {
      r.error = e.what();
      return r;
    }
  }
  return r;
}

JudgeResult judge_line(gateway::ModelGateway& gw, const prompts::PromptLibrary& lib, const LineSample& sample) {
  JudgeResult r;
  const auto prompt = render_line_prompt(lib, sample);
  std::set<std::int64_t> own_earlier;
  for (const auto& u : sample.history)
    if (u.speaker == sample.line.speaker && u.index < sample.line.index) own_earlier.insert(u.index);

  for (int attempt = 0; attempt < 2; ++attempt) {
    gateway::GatewayRequest req;
    req.prompt = attempt == 0 ? prompt : prompt + std::string(kListReminder);
    req.temperature = 0.0;
    req.max_tokens = 300;
    req.purpose = purpose_of(JudgeKind::Consistency);
    ++r.attempts;
    try {
      auto v = parse_consistency_verdict(gw.send(req).text);
      std::erase_if(v.conflicting, [&](std::int64_t i) { return !own_earlier.count(i); });
      v.consistent = v.conflicting.empty();
      r.consistency = v;
      r.scored = true;
      return r;
    } catch (const MalformedJudgeOutput& e) {
      r.error = e.what();
    } catch (const gateway::GatewayError& e) {
      r.error = e.what();
      return r;
    }
  }
  return r;
}

void install_scripted_judge(gateway::ScriptedBackend& backend) {
  const auto* banks = &backend;
  auto pair_rule = [banks](JudgeKind kind) {
    return [banks, kind](const gateway::GatewayRequest& req) {
      const bool role = kind == JudgeKind::Role;
      const auto stage = stage_in_prompt(req.prompt);
      bool ok[2] = {true, true};
      for (const auto& [agent, text] : responses_in_prompt(req.prompt)) {
        const auto owner = banks->owner_of(text);
        const bool fits = owner && owner->first == agent && (role || owner->second == stage);
        ok[static_cast<int>(agent)] = ok[static_cast<int>(agent)] && fits;
      }
      const char* suffix = role ? "_role" : "_stage_behavior";
      json out = {{std::string("alex") + suffix, {{"rating", ok[0] ? "Yes" : "No"}}},
                  {std::string("jordan") + suffix, {{"rating", ok[1] ? "Yes" : "No"}}}};
      return out.dump();
    };
  };
  for (auto kind : {JudgeKind::Role, JudgeKind::Stage}) {
    backend.add_rule([p = purpose_of(kind)](const gateway::GatewayRequest& r) { return r.purpose == p; },
                     pair_rule(kind));
  }
  backend.add_rule(
      [](const gateway::GatewayRequest& r) { return r.purpose == purpose_of(JudgeKind::Consistency); },
      [](const gateway::GatewayRequest&) { return std::string("The line does not contradict earlier statements. []"); });
}

}  // namespace couplesim::eval

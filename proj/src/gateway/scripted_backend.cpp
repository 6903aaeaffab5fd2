#include "couplesim/gateway/scripted_backend.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "couplesim/util/text.hpp"
#include "embedded_data.hpp"

namespace couplesim::gateway {

using json = nlohmann::json;

std::vector<BankEntry> parse_banks(const json& j) {
  std::vector<BankEntry> out;
  auto parse_one = [&](const json& e) {
    BankEntry b;
    b.agent = parse_agent(e.at("agent").get<std::string>());
    b.stage = parse_stage(e.at("stage").get<std::string>());
    b.lines = e.at("lines").get<std::vector<std::string>>();
    if (b.lines.empty()) throw ParseError("bank for " + std::string(to_string(b.agent)) + " has no lines");
    if (e.contains("emotion")) b.emotion = parse_emotion(e.at("emotion").get<std::string>());
    out.push_back(std::move(b));
  };
  if (j.is_array()) {
    for (const auto& e : j) parse_one(e);
  } else {
    parse_one(j);
  }
  return out;
}

std::vector<BankEntry> load_banks(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read bank file " + file.string());
  return parse_banks(json::parse(in));
}

const std::vector<BankEntry>& default_banks() {
  static const std::vector<BankEntry> banks = [] {
    for (const auto& f : detail::kDataFiles)
      if (f.name == "scripted_banks.json") return parse_banks(json::parse(f.content));
    throw std::logic_error("embedded scripted_banks.json missing");
  }();
  return banks;
}

std::optional<std::pair<AgentId, Stage>> parse_agent_prompt(std::string_view system_prompt) {
  std::optional<AgentId> agent;
  std::optional<Stage> stage;
  for (const auto& line : util::split_lines(system_prompt)) {
    std::string_view l = line;
    constexpr std::string_view kYouAre = "You are ";
    constexpr std::string_view kStage = "Current interaction stage: ";
    if (!agent && l.substr(0, kYouAre.size()) == kYouAre) {
      auto rest = l.substr(kYouAre.size());
      auto end = rest.find_first_of(",. ");
      try {
        agent = parse_agent(rest.substr(0, end));
      } catch (const ParseError&) {
      }
    } else if (!stage && l.substr(0, kStage.size()) == kStage) {
      stage = try_parse_stage(util::trim(l.substr(kStage.size())));
    }
  }
  if (agent && stage) return std::make_pair(*agent, *stage);
  return std::nullopt;
}

ScriptedBackend::ScriptedBackend(std::vector<BankEntry> banks) : banks_(std::move(banks)) {}

void ScriptedBackend::add_rule(Matcher matcher, Responder responder) {
  std::lock_guard lock(mu_);
  rules_.emplace_back(std::move(matcher), std::move(responder));
}

void ScriptedBackend::queue_output(std::string purpose, std::string text) {
  std::lock_guard lock(mu_);
  queued_[std::move(purpose)].push_back(std::move(text));
}

void ScriptedBackend::fail_next(GatewayError::Kind kind, std::size_t count) {
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < count; ++i) failures_.push_back(kind);
}

void ScriptedBackend::set_seed(std::uint64_t seed) {
  std::lock_guard lock(mu_);
  seed_ = seed;
  cursor_.clear();
}

std::size_t ScriptedBackend::request_count() const {
  std::lock_guard lock(mu_);
  return requests_;
}

const BankEntry* ScriptedBackend::bank_for(AgentId agent, Stage stage) const {
  for (const auto& b : banks_)
    if (b.agent == agent && b.stage == stage) return &b;
  return nullptr;
}

std::optional<std::pair<AgentId, Stage>> ScriptedBackend::owner_of(std::string_view line) const {
  auto wanted = util::trim(line);
  for (const auto& b : banks_)
    for (const auto& l : b.lines)
      if (l == wanted) return std::make_pair(b.agent, b.stage);
  return std::nullopt;
}

std::string ScriptedBackend::default_completion(const GatewayRequest& req, std::optional<Emotion>& emotion) {
  auto who = parse_agent_prompt(req.system);
  if (!who) return "I'm not sure what to say.";
  const BankEntry* bank = bank_for(who->first, who->second);
  if (!bank) return "I'm not sure what to say.";
  auto& cur = cursor_.try_emplace(*who, static_cast<std::size_t>(seed_ % bank->lines.size())).first->second;
  const auto& line = bank->lines[cur % bank->lines.size()];
  ++cur;
  emotion = bank->emotion;
  return line;
}

GatewayResponse ScriptedBackend::send(const GatewayRequest& req) {
  // Custom rules run under the lock; they must not call back into this backend.
  std::lock_guard lock(mu_);
  ++requests_;
  GatewayResponse resp;
  resp.backend_id = "scripted";
  if (!failures_.empty()) {
    auto kind = failures_.front();
    failures_.pop_front();
    throw GatewayError(kind, "scripted failure: " + std::string(to_string(kind)));
  }
  if (auto q = queued_.find(req.purpose); q != queued_.end() && !q->second.empty()) {
    resp.text = std::move(q->second.front());
    q->second.pop_front();
    return resp;
  }
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) {
    if (it->first(req)) {
      resp.text = it->second(req);
      return resp;
    }
  }
  if (req.kind == RequestKind::Classification) {
    resp.text = req.label_set.empty() ? std::string{} : req.label_set.front();
  } else {
    resp.text = default_completion(req, resp.emotion_override);
  }
  return resp;
}

}  // namespace couplesim::gateway

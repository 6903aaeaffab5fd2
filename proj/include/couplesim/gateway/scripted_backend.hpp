#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "couplesim/gateway/gateway.hpp"

namespace couplesim::gateway {

// Canned utterances for one (agent, stage) pair.
struct BankEntry {
  AgentId agent = AgentId::Alex;
  Stage stage = Stage::Greeting;
  std::vector<std::string> lines;
  std::optional<Emotion> emotion;  // optional emotion tag reported with every line
};

// Accepts a single {agent, stage, lines} object or an array of them.
std::vector<BankEntry> parse_banks(const nlohmann::json& j);
std::vector<BankEntry> load_banks(const std::filesystem::path& file);
// Banks compiled in from data/scripted_banks.json.
const std::vector<BankEntry>& default_banks();

// Deterministic offline backend. Resolution order for each request: injected
// failures, queued outputs for the request's purpose, custom rules (latest
// first), then the built-in defaults. Completions pick bank lines by cycling
// through the (agent, stage) bank named in the system prompt. Every request is
// answered.
class ScriptedBackend : public ModelGateway {
 public:
  using Matcher = std::function<bool(const GatewayRequest&)>;
  using Responder = std::function<std::string(const GatewayRequest&)>;

  explicit ScriptedBackend(std::vector<BankEntry> banks = default_banks());

  GatewayResponse send(const GatewayRequest& request) override;
  std::string backend_id() const override { return "scripted"; }
  bool deterministic() const override { return true; }

  void add_rule(Matcher matcher, Responder responder);
  void queue_output(std::string purpose, std::string text);
  void fail_next(GatewayError::Kind kind, std::size_t count = 1);
  // Offsets where each bank starts cycling. Call before the first request.
  void set_seed(std::uint64_t seed);

  const std::vector<BankEntry>& banks() const { return banks_; }
  const BankEntry* bank_for(AgentId agent, Stage stage) const;
  // Bank that contains exactly this line, if any.
  std::optional<std::pair<AgentId, Stage>> owner_of(std::string_view line) const;

  std::size_t request_count() const;

 private:
  std::string default_completion(const GatewayRequest& req, std::optional<Emotion>& emotion);

  std::vector<BankEntry> banks_;
  mutable std::mutex mu_;
  std::vector<std::pair<Matcher, Responder>> rules_;
  std::map<std::string, std::deque<std::string>> queued_;
  std::deque<GatewayError::Kind> failures_;
  std::map<std::pair<AgentId, Stage>, std::size_t> cursor_;
  std::size_t requests_ = 0;
  std::uint64_t seed_ = 0;
};

// Parses "You are <Agent>" and "Current interaction stage: <Stage>" out of an
// agent system prompt.
std::optional<std::pair<AgentId, Stage>> parse_agent_prompt(std::string_view system_prompt);

}  // namespace couplesim::gateway

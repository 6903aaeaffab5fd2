#include "couplesim/cli/config.hpp"

#include <fstream>
#include <map>
#include <mutex>

#include <nlohmann/json.hpp>

#include "couplesim/util/text.hpp"

namespace couplesim::cli {

using json = nlohmann::json;

Config load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot read config file " + file.string());
  Config cfg;
  try {
    const auto j = json::parse(in);
    if (!j.is_object()) throw UsageError("config must be a JSON object");
    cfg.bind = j.value("bind", cfg.bind);
    cfg.port = j.value("port", cfg.port);
    cfg.threads = j.value("threads", cfg.threads);
    if (j.contains("data_dir")) cfg.data_dir = j["data_dir"].get<std::string>();
    cfg.idle_timeout = std::chrono::minutes(j.value("idle_timeout_min", cfg.idle_timeout.count()));
    cfg.a2a_delay = std::chrono::milliseconds(j.value("a2a_delay_ms", cfg.a2a_delay.count()));
    if (j.contains("prompts_dir") && !j["prompts_dir"].is_null()) cfg.prompts_dir = j["prompts_dir"].get<std::string>();
    if (j.contains("banks") && !j["banks"].is_null()) cfg.banks = j["banks"].get<std::string>();
    cfg.max_in_flight = j.value("max_in_flight", cfg.max_in_flight);
    if (j.contains("backend")) cfg.backend = gateway::remote_config_from_json(j["backend"]);
  } catch (const json::exception& e) {
    throw UsageError("config file " + file.string() + ": " + e.what());
  }
  // Relative paths in the config resolve against the config file.
  const auto base = file.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (p.is_relative() && !base.empty()) p = base / p;
  };
  resolve(cfg.data_dir);
  if (cfg.prompts_dir) resolve(*cfg.prompts_dir);
  if (cfg.banks) resolve(*cfg.banks);
  return cfg;
}

Config load_config_or_default(const std::optional<std::filesystem::path>& file) {
  return file ? load_config(*file) : Config{};
}

BackendKind parse_backend(std::string_view s) {
  const auto v = util::to_lower(s);
  if (v == "scripted") return BackendKind::Scripted;
  if (v == "remote") return BackendKind::Remote;
  throw UsageError("unknown backend \"" + std::string(s) + "\" (expected scripted or remote)");
}

const prompts::PromptLibrary& prompt_library(const Config& cfg) {
  if (!cfg.prompts_dir) return prompts::PromptLibrary::builtin();
  // Loaded libraries live for the rest of the process.
  static std::mutex mu;
  static std::map<std::filesystem::path, prompts::PromptLibrary> loaded;
  std::lock_guard lock(mu);
  auto it = loaded.find(*cfg.prompts_dir);
  if (it == loaded.end()) it = loaded.emplace(*cfg.prompts_dir, prompts::PromptLibrary::load(*cfg.prompts_dir)).first;
  return it->second;
}

std::vector<gateway::BankEntry> scripted_banks(const Config& cfg) {
  return cfg.banks ? gateway::load_banks(*cfg.banks) : gateway::default_banks();
}

std::unique_ptr<gateway::ModelGateway> make_gateway(BackendKind kind, const Config& cfg) {
  if (kind == BackendKind::Remote) return std::make_unique<gateway::RemoteBackend>(cfg.backend);
  return std::make_unique<gateway::ScriptedBackend>(scripted_banks(cfg));
}

}  // namespace couplesim::cli

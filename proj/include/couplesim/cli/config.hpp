#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "couplesim/gateway/remote_backend.hpp"
#include "couplesim/gateway/scripted_backend.hpp"
#include "couplesim/prompts/prompt_library.hpp"

namespace couplesim::cli {

// Exit codes are a stable contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Thrown for bad flags or inputs the user must fix; maps to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Single JSON config file. Every field is optional:
// {
//   "bind": "127.0.0.1", "port": 8080, "threads": 2,
//   "data_dir": "sessions", "idle_timeout_min": 60, "a2a_delay_ms": 0,
//   "prompts_dir": null, "banks": null, "max_in_flight": 4,
//   "backend": {"endpoint": "...", "model": "gpt-4o-mini", "api_key_env": "COUPLESIM_API_KEY",
//               "timeout_ms": 30000, "retries": 1}
// }
struct Config {
  std::string bind = "127.0.0.1";
  std::uint16_t port = 8080;
  int threads = 2;
  std::filesystem::path data_dir = "sessions";
  std::chrono::minutes idle_timeout{60};
  std::chrono::milliseconds a2a_delay{0};
  std::optional<std::filesystem::path> prompts_dir;  // built-in assets when absent
  std::optional<std::filesystem::path> banks;        // built-in scripted banks when absent
  std::size_t max_in_flight = 4;
  gateway::RemoteConfig backend;
};

// Throws UsageError on unreadable or malformed files.
Config load_config(const std::filesystem::path& file);
Config load_config_or_default(const std::optional<std::filesystem::path>& file);

enum class BackendKind { Scripted, Remote };
BackendKind parse_backend(std::string_view s);  // throws UsageError

// Prompt library named by the config, or the built-in one.
const prompts::PromptLibrary& prompt_library(const Config& cfg);
std::vector<gateway::BankEntry> scripted_banks(const Config& cfg);

std::unique_ptr<gateway::ModelGateway> make_gateway(BackendKind kind, const Config& cfg);

}  // namespace couplesim::cli

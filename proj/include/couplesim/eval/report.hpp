#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "couplesim/engine/session.hpp"
#include "couplesim/eval/judge.hpp"
#include "couplesim/eval/stats.hpp"

namespace couplesim::eval {

inline constexpr int kReportSchemaVersion = 1;

class EmptyCorpus : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Annotation {
  std::string session_id;
  std::int64_t utterance_index = 0;
  Stage stage = Stage::Greeting;
};

// CSV with columns session_id, utterance_index, stage; a header row is optional.
std::vector<Annotation> load_annotations(const std::filesystem::path& file);

// Every session in a directory (one <id>.jsonl, optionally with <id>.json).
std::vector<Session> load_corpus(const std::filesystem::path& dir);

struct Rate {
  std::size_t yes = 0;
  std::size_t scored = 0;
  double value() const { return scored ? static_cast<double>(yes) / static_cast<double>(scored) : 0.0; }
};

// Judge verdicts over one corpus.
struct BehaviorSummary {
  std::map<AgentId, Rate> role;
  std::map<AgentId, Rate> stage;
  std::map<AgentId, Rate> consistency;
  std::size_t turns = 0;  // therapist turns with at least one agent line
  std::size_t lines = 0;  // agent lines
  std::map<JudgeKind, std::size_t> scored;
  std::map<JudgeKind, std::size_t> unscored;

  Rate pooled_role() const;
  Rate pooled_stage() const;
  Rate pooled_consistency() const;
};

struct FidelityReport {
  int schema_version = kReportSchemaVersion;
  std::size_t sessions = 0;
  std::size_t utterances = 0;
  std::size_t agent_lines = 0;
  std::size_t therapist_turns = 0;
  std::map<OverrideRule, std::size_t> overrides;
  std::size_t fallback_decisions = 0;

  // Stage agreement against human annotations; absent without annotations.
  std::optional<AgreementReport> agreement;
  std::size_t annotated_utterances = 0;
  std::size_t unmatched_annotations = 0;
  std::size_t annotated_sessions = 0;
  bool partial_kappa_coverage = false;

  std::optional<BehaviorSummary> behavior;
  std::optional<BehaviorSummary> baseline;
  std::map<std::string, ChiSquareResult> chi2;  // "role", "stage", "consistency" vs the baseline
};

struct ReportOptions {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> annotations;
  std::optional<std::filesystem::path> baseline;  // second corpus for the 2x2 tests
  gateway::ModelGateway* judge = nullptr;         // null: no judging
  const prompts::PromptLibrary* prompts = nullptr;  // defaults to the built-in library
  std::size_t max_in_flight = 4;
  bool judge_consistency = true;
  bool yates = true;
};

BehaviorSummary judge_corpus(const std::vector<Session>& sessions, gateway::ModelGateway& judge,
                             const prompts::PromptLibrary& lib, std::size_t max_in_flight, bool consistency);

// Throws EmptyCorpus when the corpus holds no session.
FidelityReport build_report(const ReportOptions& options);

nlohmann::json to_json(const FidelityReport& r);
std::string to_text(const FidelityReport& r);

}  // namespace couplesim::eval

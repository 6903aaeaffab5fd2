#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "couplesim/engine/session.hpp"
#include "couplesim/engine/types.hpp"

namespace couplesim::prompts {

enum class TemplateId {
  StageClassifier,
  AgentSystem,
  SpeakerClassifier,
  VoiceStyle,
  JudgeRole,
  JudgeStage,
  JudgeConsistency
};

inline constexpr std::array<TemplateId, 7> kAllTemplates = {
    TemplateId::StageClassifier, TemplateId::AgentSystem, TemplateId::SpeakerClassifier,
    TemplateId::VoiceStyle,      TemplateId::JudgeRole,   TemplateId::JudgeStage,
    TemplateId::JudgeConsistency};

std::string_view to_string(TemplateId id);
std::optional<TemplateId> parse_template_id(std::string_view name);

using Bindings = std::map<std::string, std::string, std::less<>>;

class PromptError : public std::runtime_error {
 public:
  enum class Kind { MissingSlot, UnusedBinding, UnknownTemplate, UnknownFragment, ChecksumMismatch, Io, Format };

  PromptError(Kind kind, std::string name, const std::string& what)
      : std::runtime_error(what), kind_(kind), name_(std::move(name)) {}

  Kind kind() const { return kind_; }
  // Slot, template, fragment or file the error refers to.
  const std::string& name() const { return name_; }

 private:
  Kind kind_;
  std::string name_;
};

// One template asset. Slots are written {{name}}; {{>prefix.a.b}} inserts the
// fragment "prefix.<a>.<b>" where <a> and <b> are the values bound to slots a
// and b. Fragments live in [section] blocks of the same asset file.
struct PromptTemplate {
  TemplateId id{};
  std::string file;
  std::string body;
  std::map<std::string, std::string, std::less<>> fragments;
  std::set<std::string, std::less<>> required_slots;
};

struct ScenarioInfo {
  std::string id;
  std::string title;
  std::string description;
};

// Immutable after construction; safe to share across threads.
class PromptLibrary {
 public:
  // Loads the asset directory and verifies every file against manifest.json.
  static PromptLibrary load(const std::filesystem::path& dir);

  // Copy of the prompts/ directory compiled into the binary.
  static const PromptLibrary& builtin();

  // Parses one asset file (exposed for tests).
  static PromptTemplate parse_template(TemplateId id, std::string file, std::string_view text);

  const PromptTemplate& get(TemplateId id) const;

  // Fails with MissingSlot when a required slot is unbound, UnusedBinding when
  // a binding is not referenced, UnknownFragment when an include key resolves
  // to no fragment.
  std::string render(TemplateId id, const Bindings& bindings) const;
  std::string render(std::string_view template_name, const Bindings& bindings) const;

  // Raw fragment text, e.g. fragment(AgentSystem, "profile.Alex").
  const std::string& fragment(TemplateId id, std::string_view key) const;

  const std::vector<ScenarioInfo>& scenarios() const { return scenarios_; }
  std::optional<Scenario> find_scenario(std::string_view id) const;

 private:
  using SourceMap = std::map<std::string, std::string, std::less<>>;
  static PromptLibrary from_sources(const SourceMap& files, const std::string& origin);

  std::map<TemplateId, PromptTemplate> templates_;
  std::vector<ScenarioInfo> scenarios_;
};

std::string agent_profile(const PromptLibrary& lib, AgentId agent);
std::string stage_behavior(const PromptLibrary& lib, AgentId agent, Stage stage);
std::string difficulty_clause(const PromptLibrary& lib, Difficulty difficulty);

// Profile, then the active stage's behavior block, then scenario, then the
// difficulty clause.
std::string agent_system_prompt(const PromptLibrary& lib, AgentId agent, Stage stage,
                                const Scenario& scenario, Difficulty difficulty);

std::string voice_style(const PromptLibrary& lib, AgentId agent, Emotion emotion);

// Difficulty also controls the engine's interrupt grace.
constexpr bool has_interrupt_grace(Difficulty d) { return d == Difficulty::Hard; }

}  // namespace couplesim::prompts

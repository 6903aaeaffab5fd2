#include "couplesim/prompts/prompt_library.hpp"

#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "couplesim/util/sha256.hpp"
#include "couplesim/util/text.hpp"
#include "embedded_prompts.hpp"

namespace couplesim::prompts {
namespace {

using json = nlohmann::json;

constexpr std::array<std::pair<TemplateId, std::string_view>, 7> kTemplateNames{{
    {TemplateId::StageClassifier, "StageClassifier"},
    {TemplateId::AgentSystem, "AgentSystem"},
    {TemplateId::SpeakerClassifier, "SpeakerClassifier"},
    {TemplateId::VoiceStyle, "VoiceStyle"},
    {TemplateId::JudgeRole, "JudgeRole"},
    {TemplateId::JudgeStage, "JudgeStage"},
    {TemplateId::JudgeConsistency, "JudgeConsistency"},
}};

const std::regex& section_re() {
  static const std::regex re(R"(^\[([A-Za-z0-9_.]+)\]$)");
  return re;
}

bool valid_slot_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

struct SlotRef {
  std::size_t begin;  // offset of "{{"
  std::size_t end;    // one past "}}"
  bool include;
  std::string prefix;              // include only
  std::vector<std::string> names;  // slot names referenced
};

std::vector<SlotRef> scan_slots(std::string_view body, const std::string& file) {
  std::vector<SlotRef> refs;
  std::size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string_view::npos) {
    auto close = body.find("}}", pos + 2);
    if (close == std::string_view::npos)
      throw PromptError(PromptError::Kind::Format, file, file + ": unterminated slot marker");
    std::string_view inner = body.substr(pos + 2, close - pos - 2);
    SlotRef ref{pos, close + 2, false, {}, {}};
    if (!inner.empty() && inner.front() == '>') {
      ref.include = true;
      inner.remove_prefix(1);
      std::size_t start = 0;
      std::vector<std::string> parts;
      while (true) {
        auto dot = inner.find('.', start);
        parts.emplace_back(inner.substr(start, dot == std::string_view::npos ? inner.npos : dot - start));
        if (dot == std::string_view::npos) break;
        start = dot + 1;
      }
      if (parts.size() < 2)
        throw PromptError(PromptError::Kind::Format, file, file + ": include needs a prefix and a slot");
      ref.prefix = parts.front();
      ref.names.assign(parts.begin() + 1, parts.end());
    } else {
      ref.names.emplace_back(inner);
    }
    for (const auto& n : ref.names)
      if (!valid_slot_name(n))
        throw PromptError(PromptError::Kind::Format, file, file + ": bad slot name '" + n + "'");
    refs.push_back(std::move(ref));
    pos = close + 2;
  }
  return refs;
}

std::string strip_trailing_newlines(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PromptError(PromptError::Kind::Io, p.string(), "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(TemplateId id) {
  for (const auto& [t, name] : kTemplateNames)
    if (t == id) return name;
  return "?";
}

std::optional<TemplateId> parse_template_id(std::string_view name) {
  for (const auto& [t, n] : kTemplateNames)
    if (n == name) return t;
  return std::nullopt;
}

PromptTemplate PromptLibrary::parse_template(TemplateId id, std::string file, std::string_view text) {
  PromptTemplate tpl;
  tpl.id = id;
  tpl.file = std::move(file);
  auto lines = util::split_lines(text);
  std::smatch m;
  if (lines.empty() || !std::regex_match(lines.front(), m, section_re())) {
    tpl.body = strip_trailing_newlines(std::string(text));
  } else {
    std::string current;
    std::map<std::string, std::vector<std::string>, std::less<>> sections;
    for (const auto& line : lines) {
      if (std::regex_match(line, m, section_re())) {
        current = m[1].str();
        if (sections.count(current))
          throw PromptError(PromptError::Kind::Format, tpl.file, tpl.file + ": duplicate section [" + current + "]");
        sections[current];
        continue;
      }
      sections[current].push_back(line);
    }
    auto joined = [](const std::vector<std::string>& ls) {
      std::string s;
      for (std::size_t i = 0; i < ls.size(); ++i) {
        if (i) s.push_back('\n');
        s += ls[i];
      }
      return strip_trailing_newlines(std::move(s));
    };
    auto body = sections.find("body");
    if (body == sections.end())
      throw PromptError(PromptError::Kind::Format, tpl.file, tpl.file + ": missing [body] section");
    tpl.body = joined(body->second);
    sections.erase(body);
    for (auto& [k, v] : sections) tpl.fragments.emplace(k, joined(v));
  }
  for (const auto& ref : scan_slots(tpl.body, tpl.file))
    tpl.required_slots.insert(ref.names.begin(), ref.names.end());
  return tpl;
}

PromptLibrary PromptLibrary::from_sources(const SourceMap& files, const std::string& origin) {
  auto manifest_it = files.find("manifest.json");
  if (manifest_it == files.end())
    throw PromptError(PromptError::Kind::Io, "manifest.json", origin + ": manifest.json missing");
  json manifest;
  try {
    manifest = json::parse(manifest_it->second);
  } catch (const json::exception& e) {
    throw PromptError(PromptError::Kind::Format, "manifest.json", origin + ": " + e.what());
  }

  PromptLibrary lib;
  for (const auto& entry : manifest) {
    const auto id_name = entry.at("id").get<std::string>();
    const auto file = entry.at("file").get<std::string>();
    auto src = files.find(file);
    if (src == files.end())
      throw PromptError(PromptError::Kind::Io, file, origin + ": asset " + file + " missing");
    if (util::sha256_hex(src->second) != entry.at("sha256").get<std::string>())
      throw PromptError(PromptError::Kind::ChecksumMismatch, file,
                        origin + ": checksum mismatch for " + file + " (regenerate manifest.json)");

    if (id_name == "Scenarios") {
      for (const auto& s : json::parse(src->second))
        lib.scenarios_.push_back({s.at("id").get<std::string>(), s.value("title", std::string{}),
                                  s.at("description").get<std::string>()});
      continue;
    }
    auto id = parse_template_id(id_name);
    if (!id) throw PromptError(PromptError::Kind::UnknownTemplate, id_name, origin + ": unknown template " + id_name);
    auto tpl = parse_template(*id, file, src->second);
    std::set<std::string, std::less<>> declared;
    for (const auto& s : entry.at("required_slots")) declared.insert(s.get<std::string>());
    if (declared != tpl.required_slots)
      throw PromptError(PromptError::Kind::Format, file, origin + ": required_slots in manifest disagree with " + file);
    lib.templates_.emplace(*id, std::move(tpl));
  }
  for (auto id : kAllTemplates)
    if (!lib.templates_.count(id))
      throw PromptError(PromptError::Kind::UnknownTemplate, std::string(to_string(id)),
                        origin + ": manifest lacks template " + std::string(to_string(id)));
  return lib;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  SourceMap files;
  files["manifest.json"] = read_file(dir / "manifest.json");
  for (const auto& entry : json::parse(files["manifest.json"])) {
    auto name = entry.at("file").get<std::string>();
    files[name] = read_file(dir / name);
  }
  return from_sources(files, dir.string());
}

const PromptLibrary& PromptLibrary::builtin() {
  static const PromptLibrary lib = [] {
    SourceMap files;
    for (const auto& f : detail::kPromptFiles) files.emplace(std::string(f.name), std::string(f.content));
    return from_sources(files, "<builtin>");
  }();
  return lib;
}

const PromptTemplate& PromptLibrary::get(TemplateId id) const { return templates_.at(id); }

const std::string& PromptLibrary::fragment(TemplateId id, std::string_view key) const {
  const auto& tpl = get(id);
  auto it = tpl.fragments.find(key);
  if (it == tpl.fragments.end())
    throw PromptError(PromptError::Kind::UnknownFragment, std::string(key),
                      std::string(to_string(id)) + ": no fragment '" + std::string(key) + "'");
  return it->second;
}

std::string PromptLibrary::render(TemplateId id, const Bindings& bindings) const {
  const auto& tpl = get(id);
  for (const auto& slot : tpl.required_slots)
    if (!bindings.count(slot))
      throw PromptError(PromptError::Kind::MissingSlot, slot,
                        std::string(to_string(id)) + ": missing slot '" + slot + "'");
  for (const auto& [name, value] : bindings)
    if (!tpl.required_slots.count(name))
      throw PromptError(PromptError::Kind::UnusedBinding, name,
                        std::string(to_string(id)) + ": unused binding '" + name + "'");

  std::string out;
  out.reserve(tpl.body.size() * 2);
  std::size_t last = 0;
  for (const auto& ref : scan_slots(tpl.body, tpl.file)) {
    out.append(tpl.body, last, ref.begin - last);
    if (ref.include) {
      std::string key = ref.prefix;
      for (const auto& n : ref.names) key += "." + bindings.find(n)->second;
      out += fragment(id, key);
    } else {
      out += bindings.find(ref.names.front())->second;
    }
    last = ref.end;
  }
  out.append(tpl.body, last, std::string::npos);
  return out;
}

std::string PromptLibrary::render(std::string_view template_name, const Bindings& bindings) const {
  auto id = parse_template_id(template_name);
  if (!id)
    throw PromptError(PromptError::Kind::UnknownTemplate, std::string(template_name),
                      "unknown template '" + std::string(template_name) + "'");
  return render(*id, bindings);
}

std::optional<Scenario> PromptLibrary::find_scenario(std::string_view id) const {
  auto wanted = util::to_lower(id);
  for (const auto& s : scenarios_)
    if (util::to_lower(s.id) == wanted) return Scenario{s.id, s.description};
  return std::nullopt;
}

std::string agent_profile(const PromptLibrary& lib, AgentId agent) {
  return lib.fragment(TemplateId::AgentSystem, "profile." + std::string(to_string(agent)));
}

std::string stage_behavior(const PromptLibrary& lib, AgentId agent, Stage stage) {
  return lib.fragment(TemplateId::AgentSystem,
                      "behavior." + std::string(to_string(agent)) + "." + std::string(to_string(stage)));
}

std::string difficulty_clause(const PromptLibrary& lib, Difficulty difficulty) {
  return lib.fragment(TemplateId::AgentSystem, "difficulty." + std::string(to_string(difficulty)));
}

std::string agent_system_prompt(const PromptLibrary& lib, AgentId agent, Stage stage,
                                const Scenario& scenario, Difficulty difficulty) {
  return lib.render(TemplateId::AgentSystem, {{"agent", std::string(to_string(agent))},
                                              {"stage", std::string(to_string(stage))},
                                              {"scenario", scenario.description},
                                              {"difficulty", std::string(to_string(difficulty))}});
}

std::string voice_style(const PromptLibrary& lib, AgentId agent, Emotion emotion) {
  return lib.render(TemplateId::VoiceStyle,
                    {{"agent", std::string(to_string(agent))}, {"emotion", std::string(to_string(emotion))}});
}

}  // namespace couplesim::prompts

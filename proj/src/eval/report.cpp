#include "couplesim/eval/report.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "couplesim/engine/transcript_io.hpp"
#include "couplesim/util/text.hpp"

namespace couplesim::eval {

using json = nlohmann::json;

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back(util::trim(cell));
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.emplace_back(util::trim(cell));
  return cells;
}

void run_parallel(std::vector<std::function<void()>>& tasks, std::size_t max_in_flight) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(max_in_flight, tasks.size()));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) tasks[i]();
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
}

Rate pooled(const std::map<AgentId, Rate>& m) {
  Rate r;
  for (const auto& [agent, rate] : m) {
    r.yes += rate.yes;
    r.scored += rate.scored;
  }
  return r;
}

json rate_json(const Rate& r) { return {{"yes", r.yes}, {"scored", r.scored}, {"rate", r.value()}}; }

json rates_json(const std::map<AgentId, Rate>& m) {
  json j = json::object();
  for (const auto& [agent, rate] : m) j[std::string(to_string(agent))] = rate_json(rate);
  j["pooled"] = rate_json(pooled(m));
  return j;
}

json behavior_json(const BehaviorSummary& b) {
  json scored = json::object(), unscored = json::object();
  for (const auto& [k, n] : b.scored) scored[std::string(to_string(k))] = n;
  for (const auto& [k, n] : b.unscored) unscored[std::string(to_string(k))] = n;
  return {{"turns", b.turns},
          {"lines", b.lines},
          {"role", rates_json(b.role)},
          {"stage", rates_json(b.stage)},
          {"consistency", rates_json(b.consistency)},
          {"scored", scored},
          {"unscored", unscored}};
}

std::string pct(const Rate& r) {
  if (r.scored == 0) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * r.value() << "% (" << r.yes << "/" << r.scored << ")";
  return os.str();
}

std::string num(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

Rate BehaviorSummary::pooled_role() const { return pooled(role); }
Rate BehaviorSummary::pooled_stage() const { return pooled(stage); }
Rate BehaviorSummary::pooled_consistency() const { return pooled(consistency); }

std::vector<Annotation> load_annotations(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read annotations " + file.string());
  std::vector<Annotation> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (util::trim(line).empty()) continue;
    auto cells = split_csv_row(line);
    if (lineno == 1 && !cells.empty() && util::to_lower(cells[0]) == "session_id") continue;
    if (cells.size() < 3)
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": expected 3 columns");
    try {
      out.push_back({cells[0], std::stoll(cells[1]), parse_stage(cells[2])});
    } catch (const std::exception& e) {
      throw std::runtime_error(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Session> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw EmptyCorpus("corpus directory not found: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") ids.push_back(entry.path().stem().string());
  std::sort(ids.begin(), ids.end());

  std::vector<Session> out;
  for (const auto& id : ids) {
    if (std::filesystem::exists(sidecar_path(dir, id))) {
      out.push_back(read_session(dir, id).session);
    } else {
      Session s;
      s.id = id;
      s.transcript = read_transcript(transcript_path(dir, id));
      for (const auto& u : s.transcript) s.therapist_turns += u.speaker == Speaker::Therapist;
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) throw EmptyCorpus("no session transcripts in " + dir.string());
  return out;
}

BehaviorSummary judge_corpus(const std::vector<Session>& sessions, gateway::ModelGateway& judge,
                             const prompts::PromptLibrary& lib, std::size_t max_in_flight, bool consistency) {
  struct TurnJob {
    TurnSample turn;
    JudgeResult role, stage;
  };
  struct LineJob {
    LineSample sample;
    JudgeResult result;
  };
  std::vector<TurnJob> turns;
  std::vector<LineJob> lines;
  for (const auto& s : sessions) {
    for (auto& t : split_turns(s)) turns.push_back({std::move(t), {}, {}});
    for (std::size_t i = 0; i < s.transcript.size(); ++i) {
      if (!is_agent(s.transcript[i].speaker)) continue;
      LineSample ls{s.id, s.scenario.description, s.transcript[i],
                    std::vector<Utterance>(s.transcript.begin(), s.transcript.begin() + static_cast<std::ptrdiff_t>(i))};
      lines.push_back({std::move(ls), {}});
    }
  }

  std::vector<std::function<void()>> tasks;
  for (auto& job : turns) {
    tasks.emplace_back([&] { job.role = judge_turn(judge, lib, JudgeKind::Role, job.turn); });
    tasks.emplace_back([&] { job.stage = judge_turn(judge, lib, JudgeKind::Stage, job.turn); });
  }
  if (consistency)
    for (auto& job : lines) tasks.emplace_back([&] { job.result = judge_line(judge, lib, job.sample); });
  run_parallel(tasks, max_in_flight);

  BehaviorSummary b;
  b.turns = turns.size();
  b.lines = lines.size();
  auto tally = [&](JudgeKind kind, const JudgeResult& r, std::map<AgentId, Rate>& rates) {
    if (!r.scored) {
      ++b.unscored[kind];
      return;
    }
    ++b.scored[kind];
    if (r.pair->alex) {
      ++rates[AgentId::Alex].scored;
      rates[AgentId::Alex].yes += *r.pair->alex;
    }
    if (r.pair->jordan) {
      ++rates[AgentId::Jordan].scored;
      rates[AgentId::Jordan].yes += *r.pair->jordan;
    }
  };
  for (const auto& job : turns) {
    tally(JudgeKind::Role, job.role, b.role);
    tally(JudgeKind::Stage, job.stage, b.stage);
  }
  if (consistency) {
    for (const auto& job : lines) {
      if (!job.result.scored) {
        ++b.unscored[JudgeKind::Consistency];
        continue;
      }
      ++b.scored[JudgeKind::Consistency];
      auto& rate = b.consistency[*agent_of(job.sample.line.speaker)];
      ++rate.scored;
      rate.yes += job.result.consistency->consistent;
    }
  }
  return b;
}

FidelityReport build_report(const ReportOptions& options) {
  const auto& lib = options.prompts ? *options.prompts : prompts::PromptLibrary::builtin();
  const auto sessions = load_corpus(options.corpus);

  FidelityReport r;
  r.sessions = sessions.size();
  for (const auto& s : sessions) {
    r.utterances += s.transcript.size();
    r.therapist_turns += static_cast<std::size_t>(s.therapist_turns);
    for (const auto& u : s.transcript) r.agent_lines += is_agent(u.speaker);
    for (const auto& d : s.stage_history) {
      if (d.override_rule != OverrideRule::None) ++r.overrides[d.override_rule];
      r.fallback_decisions += d.used_fallback;
    }
  }

  if (options.annotations) {
    std::map<std::pair<std::string, std::int64_t>, Stage> system_stage;
    for (const auto& s : sessions)
      for (const auto& u : s.transcript) system_stage[{s.id, u.index}] = u.stage;
    std::vector<Stage> sys, hum;
    std::set<std::string> annotated;
    for (const auto& a : load_annotations(*options.annotations)) {
      auto it = system_stage.find({a.session_id, a.utterance_index});
      if (it == system_stage.end()) {
        ++r.unmatched_annotations;
        continue;
      }
      sys.push_back(it->second);
      hum.push_back(a.stage);
      annotated.insert(a.session_id);
    }
    r.annotated_utterances = sys.size();
    r.annotated_sessions = annotated.size();
    r.partial_kappa_coverage = annotated.size() < sessions.size();
    if (!sys.empty()) r.agreement = per_stage_metrics(sys, hum);
  }

  if (options.judge) {
    r.behavior = judge_corpus(sessions, *options.judge, lib, options.max_in_flight, options.judge_consistency);
    if (options.baseline) {
      r.baseline = judge_corpus(load_corpus(*options.baseline), *options.judge, lib, options.max_in_flight,
                                options.judge_consistency);
      auto test = [&](const char* name, const Rate& a, const Rate& b) {
        if (a.scored > 0 && b.scored > 0)
          r.chi2[name] = chi_square_2x2(static_cast<std::int64_t>(a.yes), static_cast<std::int64_t>(a.scored),
                                        static_cast<std::int64_t>(b.yes), static_cast<std::int64_t>(b.scored),
                                        options.yates);
      };
      test("role", r.behavior->pooled_role(), r.baseline->pooled_role());
      test("stage", r.behavior->pooled_stage(), r.baseline->pooled_stage());
      test("consistency", r.behavior->pooled_consistency(), r.baseline->pooled_consistency());
    }
  }
  return r;
}

json to_json(const FidelityReport& r) {
  json overrides = json::object();
  for (const auto& [rule, n] : r.overrides) overrides[std::string(to_string(rule))] = n;
  json j = {{"schema_version", r.schema_version},
            {"sessions", r.sessions},
            {"utterances", r.utterances},
            {"agent_lines", r.agent_lines},
            {"therapist_turns", r.therapist_turns},
            {"overrides", overrides},
            {"fallback_decisions", r.fallback_decisions}};

  if (r.agreement) {
    json per_stage = json::object();
    for (const auto& [stage, m] : r.agreement->per_stage)
      per_stage[std::string(to_string(stage))] = {{"support", m.support},
                                                  {"predicted", m.predicted},
                                                  {"kappa", m.kappa},
                                                  {"precision", m.precision},
                                                  {"recall", m.recall},
                                                  {"f1", m.f1},
                                                  {"precision_undefined", m.precision_undefined},
                                                  {"recall_undefined", m.recall_undefined}};
    j["stage_agreement"] = {{"n", r.agreement->n},
                            {"kappa_multiclass", r.agreement->kappa_multiclass},
                            {"kappa_weighted", r.agreement->kappa_weighted},
                            {"precision_weighted", r.agreement->precision_weighted},
                            {"recall_weighted", r.agreement->recall_weighted},
                            {"f1_weighted", r.agreement->f1_weighted},
                            {"per_stage", per_stage},
                            {"annotated_sessions", r.annotated_sessions},
                            {"unmatched_annotations", r.unmatched_annotations},
                            {"partial_coverage", r.partial_kappa_coverage}};
  } else {
    j["stage_agreement"] = nullptr;
  }

  j["behavior"] = r.behavior ? behavior_json(*r.behavior) : json(nullptr);
  if (r.baseline) j["baseline"] = behavior_json(*r.baseline);
  json chi2 = json::object();
  for (const auto& [name, c] : r.chi2)
    chi2[name] = {{"statistic", c.statistic}, {"dof", c.dof}, {"p", c.p}, {"degenerate", c.degenerate}};
  j["chi2"] = chi2;
  return j;
}

std::string to_text(const FidelityReport& r) {
  std::ostringstream os;
  os << "Corpus: " << r.sessions << " sessions, " << r.utterances << " utterances, " << r.therapist_turns
     << " therapist turns, " << r.agent_lines << " agent lines\n";
  os << "Stage decisions: " << r.fallback_decisions << " from the fallback heuristic";
  for (const auto& [rule, n] : r.overrides) os << ", " << to_string(rule) << "=" << n;
  os << "\n\n";

  if (r.agreement) {
    const auto& a = *r.agreement;
    os << "Stage agreement (" << a.n << " annotated utterances";
    if (r.partial_kappa_coverage) os << ", PARTIAL coverage: " << r.annotated_sessions << "/" << r.sessions << " sessions";
    os << ")\n";
    os << std::left << std::setw(16) << "Stage" << std::setw(9) << "Support" << std::setw(9) << "Kappa"
       << std::setw(11) << "Precision" << std::setw(9) << "Recall" << "F1\n";
    for (const auto& [stage, m] : a.per_stage)
      os << std::setw(16) << display_name(stage) << std::setw(9) << m.support << std::setw(9) << num(m.kappa)
         << std::setw(11) << (num(m.precision) + (m.precision_undefined ? "*" : "")) << std::setw(9) << num(m.recall)
         << num(m.f1) << "\n";
    os << std::setw(16) << "Weighted" << std::setw(9) << a.n << std::setw(9) << num(a.kappa_weighted) << std::setw(11)
       << num(a.precision_weighted) << std::setw(9) << num(a.recall_weighted) << num(a.f1_weighted) << "\n";
    os << "Multi-class kappa: " << num(a.kappa_multiclass) << "   (* = never predicted, reported as 0)\n\n";
  } else {
    os << "Stage agreement: no annotations\n\n";
  }

  auto behavior = [&](const char* title, const BehaviorSummary& b) {
    os << title << " (" << b.turns << " turns, " << b.lines << " lines)\n";
    os << std::left << std::setw(14) << "" << std::setw(24) << "Alex" << std::setw(24) << "Jordan" << "Combined\n";
    auto row = [&](const char* name, const std::map<AgentId, Rate>& m) {
      auto get = [&](AgentId a) { auto it = m.find(a); return it == m.end() ? Rate{} : it->second; };
      os << std::setw(14) << name << std::setw(24) << pct(get(AgentId::Alex)) << std::setw(24)
         << pct(get(AgentId::Jordan)) << pct(pooled(m)) << "\n";
    };
    row("Role", b.role);
    row("Stage", b.stage);
    row("Consistency", b.consistency);
    std::size_t unscored = 0;
    for (const auto& [k, n] : b.unscored) unscored += n;
    os << "Unscored judgments: " << unscored << "\n\n";
  };
  if (r.behavior) behavior("Behavioral fidelity", *r.behavior);
  if (r.baseline) behavior("Baseline", *r.baseline);
  for (const auto& [name, c] : r.chi2)
    os << "chi2 " << name << ": " << num(c.statistic, 2) << " (dof " << c.dof << ", p " << std::scientific
       << std::setprecision(3) << c.p << std::fixed << ")" << (c.degenerate ? " degenerate" : "") << "\n";
  return os.str();
}

}  // namespace couplesim::eval

// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "couplesim/cli/commands.hpp"
#include "couplesim/engine/rules.hpp"
#include "couplesim/engine/transcript_io.hpp"
#include "couplesim/eval/report.hpp"
#include "couplesim/eval/stats.hpp"
#include "couplesim/util/text.hpp"
#include "support.hpp"

using namespace couplesim;
using namespace testsupport;

namespace {

// Digest of data/replay/demo.json under the built-in prompts and banks.
constexpr const char* kGoldenReplayDigest = "85f588bb3efa6630829812fb33333bb5cd75b041e1b77dbcc49b8e1d0fa24409";

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS" : "FAIL") << "  " << name << "  (" << o.detail << ")" << std::endl;
}

// ---- hard rules -----------------------------------------------------------------

Outcome hard_rule_properties() {
  const auto start = std::chrono::steady_clock::now();
  const auto v = run_random_sessions(1000, 20240917);
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto violations = v.gate + v.force + v.triple + v.absorbing + v.numbering;
  std::ostringstream d;
  d << v.sessions << " sessions, " << v.decisions << " decisions, turn-7 cases " << v.force_checked << "; violations: gate "
    << v.gate << ", force " << v.force << ", triple " << v.triple << ", absorbing " << v.absorbing << ", numbering "
    << v.numbering << "; " << secs << " s";
  for (const auto& e : v.examples) d << "; " << e;
  return {v.sessions >= 1000 && violations == 0 && v.force_checked > 0 && secs < 10.0, d.str()};
}

// ---- statistics ----------------------------------------------------------------------

Outcome chi_square_reproduction() {
  const auto role = eval::chi_square_2x2(376, 532, 16, 329, true);
  const auto stage = eval::chi_square_2x2(446, 532, 210, 329, true);
  const bool reference = std::abs(role.statistic - 352.39) <= 0.5 && std::abs(stage.statistic - 43.75) <= 0.5;

  std::mt19937_64 rng(7);
  double worst = 0, worst_p = 0;
  int tables = 0;
  while (tables < 1000) {
    const std::int64_t ta = 1 + rng() % 600, tb = 1 + rng() % 600;
    const std::int64_t sa = rng() % (ta + 1), sb = rng() % (tb + 1);
    if (sa + sb == 0 || sa + sb == ta + tb) continue;  // degenerate column
    const auto r = eval::chi_square_2x2(sa, ta, sb, tb, false);
    const double oracle = chi2_bruteforce(sa, ta, sb, tb);
    worst = std::max(worst, std::abs(r.statistic - oracle));
    worst_p = std::max(worst_p, std::abs(r.p - chi2_p_df1(r.statistic)));
    ++tables;
  }
  std::ostringstream d;
  d << "role " << role.statistic << ", stage " << stage.statistic << "; max |uncorrected - oracle| = " << worst
    << " over " << tables << " tables; max p deviation " << worst_p;
  return {reference && worst <= 1e-9 && worst_p <= 1e-9, d.str()};
}

Outcome kappa_oracle() {
  std::mt19937_64 rng(11);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 80);
    const int k = 1 + static_cast<int>(rng() % 6);
    std::vector<int> ai(n), bi(n);
    std::vector<Stage> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      ai[i] = static_cast<int>(rng() % k);
      // Correlated second rater: copy with probability 1/2.
      bi[i] = rng() % 2 ? ai[i] : static_cast<int>(rng() % k);
      a[i] = kAllStages[ai[i]];
      b[i] = kAllStages[bi[i]];
    }
    worst = std::max(worst, std::abs(eval::cohen_kappa(a, b) - kappa_bruteforce(ai, bi, 6)));
  }
  const auto G = Stage::Greeting, E = Stage::Escalation;
  const double hand = eval::cohen_kappa(std::vector<Stage>{G, G, E, E}, std::vector<Stage>{G, E, E, E});
  std::ostringstream d;
  d << "max deviation " << worst << " over 1000 pairs; hand case " << hand;
  return {worst <= 1e-12 && hand == 0.5, d.str()};
}

// ---- engine policies --------------------------------------------------------------

Outcome speaker_table() {
  const auto cases = speaker_cases();
  std::size_t ok = 0;
  std::string failed;
  for (const auto& c : cases) {
    SpeakerOracle oracle = [&c](std::span<const Utterance>, Stage) { return c.oracle_verdict; };
    const auto got = determine_next_speaker(c.context, c.stage, c.explicit_addressee, oracle);
    const bool therapist_last = c.context.back().speaker == Speaker::Therapist;
    if (got == c.expected && !(therapist_last && got == Addressee::Therapist)) {
      ++ok;
    } else {
      failed += "; " + c.name + " -> " + std::string(to_string(got));
    }
  }
  return {ok == cases.size() && cases.size() >= 20,
          std::to_string(ok) + "/" + std::to_string(cases.size()) + " cases" + failed};
}

struct LoopRun {
  int loop_lines = 0;        // loop utterances before the interrupt (or all of them)
  int after_interrupt = 0;   // loop utterances after the interrupt
  int started_remaining = -1;
  bool alternating = true;   // partners alternate, accused first, addressed to each other
  bool ended = false;
};

// Drives a session into a loop triggered by Alex in `stage`, then lets it run
// (interrupt_after < 0) or interrupts it after that many loop utterances.
LoopRun loop_run(Stage stage, Difficulty difficulty, int interrupt_after) {
  const auto& lib = prompts::PromptLibrary::builtin();
  gateway::ScriptedBackend agents;
  gateway::ScriptedBackend classifier;
  classifier.add_rule([](const gateway::GatewayRequest& r) { return r.purpose == "stage" || r.purpose == "speaker"; },
                      [](const gateway::GatewayRequest&) { return std::string{}; });
  Engine engine(lib, agents, &classifier);
  Session s;
  s.id = "loop";
  s.scenario = *lib.find_scenario("s1");
  s.difficulty = difficulty;
  std::int64_t now = 0;
  SessionRunner runner(s, engine, [&now] { return ++now; });

  LoopRun r;
  bool interrupted = false;
  std::optional<AgentId> expected = AgentId::Jordan;  // the accused answers first
  const EventSink sink = [&](const TurnEvent& e) {
    if (const auto* st = std::get_if<A2AStarted>(&e)) r.started_remaining = st->remaining;
    if (std::holds_alternative<A2AEnded>(e)) r.ended = true;
  };
  const EventSink loop_sink = [&](const TurnEvent& e) {
    sink(e);
    const auto* m = std::get_if<AgentMessage>(&e);
    if (!m) return;
    const auto speaker = *agent_of(m->utterance.speaker);
    if (speaker != *expected || m->utterance.addressee != as_addressee(partner_of(speaker))) r.alternating = false;
    expected = partner_of(speaker);
    (interrupted ? r.after_interrupt : r.loop_lines)++;
  };

  // Warm-up turns keep the session out of the gated window when needed.
  const int warmup = stage == Stage::Escalation ? 5 : 0;
  for (int i = 0; i < warmup; ++i) {
    classifier.queue_output("stage", "Greeting");
    runner.therapist_message("Hello, welcome to the session.", std::nullopt, sink);
  }
  classifier.queue_output("stage", std::string(display_name(stage)));
  agents.queue_output("agent", "You never help with anything!");
  runner.therapist_message("Alex, what happened this week?", Addressee::Alex, sink);
  if (!s.a2a.active) return r;

  if (interrupt_after < 0) {
    runner.run_a2a(loop_sink);
  } else {
    int left = interrupt_after;
    if (!runner.run_a2a(loop_sink, [&left] { return left-- <= 0; })) {
      interrupted = true;
      runner.interrupt(loop_sink);
    }
  }
  r.ended = r.ended && !s.a2a.active;
  return r;
}

Outcome a2a_lengths() {
  const auto pr = loop_run(Stage::ProblemRaising, Difficulty::Normal, -1);
  const auto esc = loop_run(Stage::Escalation, Difficulty::Normal, -1);
  const auto normal = loop_run(Stage::Escalation, Difficulty::Normal, 2);
  const auto hard = loop_run(Stage::Escalation, Difficulty::Hard, 2);
  const auto hard_mid = loop_run(Stage::Escalation, Difficulty::Hard, 3);
  std::ostringstream d;
  d << "PR " << pr.loop_lines / 2.0 << " exchanges (announced " << pr.started_remaining << "), Esc "
    << esc.loop_lines / 2.0 << " (announced " << esc.started_remaining << "); Normal interrupt after 2 lines: +"
    << normal.after_interrupt << "; Hard after 2 lines: +" << hard.after_interrupt << "; Hard mid-exchange after 3: +"
    << hard_mid.after_interrupt;
  const bool ok = pr.loop_lines == 6 && pr.started_remaining == 3 && esc.loop_lines == 10 && esc.started_remaining == 5 &&
                  pr.alternating && esc.alternating && pr.ended && esc.ended && normal.loop_lines == 2 &&
                  normal.after_interrupt == 0 && normal.ended && hard.loop_lines == 2 && hard.after_interrupt == 2 &&
                  hard.ended && hard.alternating && hard_mid.loop_lines == 3 && hard_mid.after_interrupt == 1 &&
                  hard_mid.ended;
  return {ok, d.str()};
}

Outcome emotion_table_check() {
  std::set<std::pair<AgentId, Stage>> covered;
  int ok = 0;
  std::string failed;
  for (const auto& [agent, stage, emotion] : emotion_table()) {
    const auto a = parse_agent(agent);
    const auto s = parse_stage(stage);
    covered.insert({a, s});
    if (to_string(emotion_for(a, s)) == emotion) {
      ++ok;
    } else {
      failed += "; " + agent + "/" + stage;
    }
  }
  return {ok == 12 && covered.size() == kAllAgents.size() * kAllStages.size(), std::to_string(ok) + "/12" + failed};
}

// ---- replay -------------------------------------------------------------------------

Outcome replay_determinism() {
  const auto script = cli::load_replay_script(source_dir() / "data" / "replay" / "demo.json");
  std::set<std::string> digests;
  for (int i = 0; i < 5; ++i) digests.insert(cli::run_replay(script, {}, "demo").digest);

  // The command itself prints the same digest.
  std::ostringstream out, err;
  cli::ReplayOptions opts;
  opts.script = source_dir() / "data" / "replay" / "demo.json";
  const int rc = cli::cmd_replay(opts, {}, out, err);
  const bool printed = out.str().find(std::string("digest: ") + *digests.begin()) != std::string::npos;

  std::ostringstream d;
  d << digests.size() << " distinct digest(s) over 5 runs: " << *digests.begin() << "; golden "
    << (*digests.begin() == kGoldenReplayDigest ? "match" : "MISMATCH") << "; cli rc " << rc;
  return {digests.size() == 1 && *digests.begin() == kGoldenReplayDigest && rc == 0 && printed, d.str()};
}

// ---- prompts --------------------------------------------------------------------------

Outcome prompt_fidelity() {
  const auto& lib = prompts::PromptLibrary::builtin();
  const auto anchors = prompt_anchors();
  std::size_t ok = 0;
  std::string failed;
  std::set<std::string> files;
  for (const auto& a : anchors) {
    std::optional<prompts::TemplateId> id;
    for (auto t : prompts::kAllTemplates)
      if (lib.get(t).file == a.file) id = t;
    std::string text;
    if (id) {
      const auto& tpl = lib.get(*id);
      if (a.section.empty()) {
        text = tpl.body;
        for (const auto& [k, f] : tpl.fragments) text += "\n" + f;
      } else {
        text = lib.fragment(*id, a.section);
      }
    }
    const bool in_template = collapse_ws(text).find(a.phrase) != std::string::npos;
    if (id && in_template) {
      ++ok;
      files.insert(a.file);
    } else {
      failed += "; " + a.file + (a.section.empty() ? "" : "[" + a.section + "]") + ": \"" + a.phrase.substr(0, 40) +
                "\"";
    }
  }
  return {ok == anchors.size() && files.size() == prompts::kAllTemplates.size(),
          std::to_string(ok) + "/" + std::to_string(anchors.size()) + " anchors across " +
              std::to_string(files.size()) + " templates" + failed};
}

// ---- scripted judge end to end ---------------------------------------------------------

Outcome scripted_judge_role_fidelity() {
  TempDir dir("accept-corpus");
  auto script = cli::load_replay_script(source_dir() / "data" / "replay" / "demo.json");
  for (int i = 0; i < 6; ++i) {
    script.seed = static_cast<std::uint64_t>(i);
    script.difficulty = static_cast<Difficulty>(i % 3);
    script.scenario = i % 2 ? "s2" : "s1";
    const auto r = cli::run_replay(script, {}, "corpus-" + std::to_string(i));
    write_session(dir.path, r.session, true);
  }
  gateway::ScriptedBackend judge;
  eval::install_scripted_judge(judge);
  eval::ReportOptions ro;
  ro.corpus = dir.path;
  ro.judge = &judge;
  ro.judge_consistency = false;
  const auto report = eval::build_report(ro);
  const auto role = report.behavior->pooled_role();
  std::ostringstream d;
  d << role.yes << "/" << role.scored << " agent responses rated in role over " << report.sessions << " sessions";
  return {role.scored > 0 && role.yes == role.scored, d.str()};
}

}  // namespace

int main() {
  report("hard-rule properties over 1000 randomized sessions", hard_rule_properties);
  report("chi-square reproduction and uncorrected oracle", chi_square_reproduction);
  report("cohen kappa oracle and hand case", kappa_oracle);
  report("next-speaker decision table", speaker_table);
  report("agent-to-agent loop lengths and interrupts", a2a_lengths);
  report("stage emotion table", emotion_table_check);
  report("replay determinism", replay_determinism);
  report("prompt fidelity anchors", prompt_fidelity);
  report("scripted-judge role fidelity", scripted_judge_role_fidelity);
  std::cout << (failures ? "FAILED: " + std::to_string(failures) + " criterion(s)" : std::string("ALL PASSED")) << std::endl;
  return failures ? 1 : 0;
}

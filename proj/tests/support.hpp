#pragma once
// Shared fixtures and independent oracles for the unit and acceptance suites.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "couplesim/engine/runner.hpp"
#include "couplesim/gateway/scripted_backend.hpp"

namespace testsupport {

using namespace couplesim;

inline std::filesystem::path source_dir() {
  if (const char* d = std::getenv("COUPLESIM_SOURCE_DIR")) return d;
  return std::filesystem::current_path();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Collapses whitespace runs to one space; case is preserved.
inline std::string collapse_ws(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(c);
  }
  return out;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("couplesim-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline Utterance utt(Speaker s, Addressee a, std::string text, std::int64_t index = 0, Stage stage = Stage::Greeting) {
  Utterance u;
  u.index = index;
  u.speaker = s;
  u.addressee = a;
  u.text = std::move(text);
  u.stage = stage;
  if (auto agent = agent_of(s)) u.emotion = Emotion::Neutral;
  return u;
}

// ---- brute-force oracles ----------------------------------------------------

// Kappa straight from a confusion matrix over label indices 0..k-1.
inline double kappa_bruteforce(const std::vector<int>& a, const std::vector<int>& b, int k) {
  std::vector<std::vector<double>> m(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) m[a[i]][b[i]] += 1.0;
  const double n = static_cast<double>(a.size());
  double diag = 0, pe = 0;
  for (int i = 0; i < k; ++i) diag += m[i][i];
  for (int i = 0; i < k; ++i) {
    double row = 0, col = 0;
    for (int j = 0; j < k; ++j) {
      row += m[i][j];
      col += m[j][i];
    }
    pe += (row / n) * (col / n);
  }
  const double po = diag / n;
  if (pe == 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

// Pearson statistic sum((O-E)^2/E) over the 2x2 table of successes/failures.
inline double chi2_bruteforce(double sa, double ta, double sb, double tb) {
  const double o[2][2] = {{sa, ta - sa}, {sb, tb - sb}};
  const double n = ta + tb;
  const double rows[2] = {ta, tb};
  const double cols[2] = {sa + sb, n - sa - sb};
  double x = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = rows[i] * cols[j] / n;
      x += (o[i][j] - e) * (o[i][j] - e) / e;
    }
  return x;
}

// Upper tail of chi-square with one degree of freedom: erfc(sqrt(x/2)).
inline double chi2_p_df1(double x) { return std::erfc(std::sqrt(x / 2.0)); }

// ---- emotion oracle (stage name -> emotion name, per agent) ----------------------

inline const std::vector<std::tuple<std::string, std::string, std::string>>& emotion_table() {
  static const std::vector<std::tuple<std::string, std::string, std::string>> t = {
      {"Alex", "Greeting", "Neutral"},          {"Alex", "ProblemRaising", "Sad"},
      {"Alex", "Escalation", "Angry"},          {"Alex", "DeEscalation", "Hopeful"},
      {"Alex", "Enactment", "Vulnerable"},      {"Alex", "WrapUp", "Relieved"},
      {"Jordan", "Greeting", "Neutral"},        {"Jordan", "ProblemRaising", "Anxious"},
      {"Jordan", "Escalation", "Sad"},          {"Jordan", "DeEscalation", "Cautious"},
      {"Jordan", "Enactment", "Open"},          {"Jordan", "WrapUp", "Calm"},
  };
  return t;
}

// ---- speaker-policy decision table ---------------------------------------------------

struct SpeakerCase {
  std::string name;
  std::vector<Utterance> context;
  Stage stage = Stage::ProblemRaising;
  std::optional<Addressee> explicit_addressee;
  std::optional<Addressee> oracle_verdict;  // what the ambiguity oracle says, if consulted
  Addressee expected;
};

inline std::vector<SpeakerCase> speaker_cases() {
  const auto T = Speaker::Therapist;
  const auto A = Speaker::Alex;
  const auto J = Speaker::Jordan;
  const auto toA = Addressee::Alex, toJ = Addressee::Jordan, toB = Addressee::Both, toT = Addressee::Therapist;
  std::vector<SpeakerCase> c;
  auto add = [&](std::string name, std::vector<Utterance> ctx, Addressee expected,
                 std::optional<Addressee> explicit_addr = std::nullopt, std::optional<Addressee> oracle = std::nullopt,
                 Stage stage = Stage::ProblemRaising) {
    for (std::size_t i = 0; i < ctx.size(); ++i) ctx[i].index = static_cast<std::int64_t>(i);
    c.push_back({std::move(name), std::move(ctx), stage, explicit_addr, oracle, expected});
  };

  // Therapist spoke last: name addressing, else both. Never the therapist.
  add("therapist names Alex first", {utt(T, toB, "Alex, how are you feeling today?")}, toA);
  add("therapist names Jordan first", {utt(T, toB, "Jordan, what do you think about that?")}, toJ);
  add("therapist trailing vocative", {utt(T, toB, "What do you think, Alex?")}, toA);
  add("therapist vocative after greeting", {utt(T, toB, "Hi Jordan, welcome back.")}, toJ);
  add("therapist vocative after thanks", {utt(T, toB, "Thank you Jordan.")}, toJ);
  add("therapist names both", {utt(T, toB, "Alex and Jordan, welcome to our session.")}, toB);
  add("therapist addresses no one", {utt(T, toB, "How are you both doing today?")}, toB);
  add("therapist general remark", {utt(T, toB, "Let's take a breath together.")}, toB);
  add("therapist mentions a name without addressing", {utt(T, toB, "It sounds like Alex feels unheard at home.")}, toB);
  add("explicit addressee wins over text", {utt(T, toJ, "How does that feel?")}, toJ, toJ);
  add("explicit both overrides vocative", {utt(T, toB, "Alex, what do you both need?")}, toB, toB);
  add("therapist after agent line", {utt(A, toT, "I'm tired of this."), utt(T, toB, "Jordan?")}, toJ);
  add("therapist never follows therapist even with oracle",
      {utt(T, toB, "Tell me more about that.")}, toB, std::nullopt, Addressee::Therapist);

  // Agent spoke last.
  add("Alex accuses Jordan", {utt(T, toB, "What happened?"), utt(A, toT, "You never listen to me.")}, toJ);
  add("Jordan accuses Alex", {utt(T, toB, "What happened?"), utt(J, toT, "You always twist my words.")}, toA);
  add("accusation is case-insensitive", {utt(A, toT, "YOU  NEVER help with anything!")}, toJ);
  add("accusation in escalation", {utt(J, toT, "Well, you always have to win.")}, toA, std::nullopt, std::nullopt,
      Stage::Escalation);
  add("Alex speaks to Jordan", {utt(A, toJ, "I need you to hear me right now.")}, toJ);
  add("Jordan speaks to Alex", {utt(J, toA, "Fine.")}, toA);
  add("Alex names Jordan", {utt(A, toT, "Jordan, please look at me.")}, toJ);
  add("Jordan names Alex", {utt(J, toT, "I don't know what Alex wants from me, Alex.")}, toA);
  add("Alex talks to the therapist", {utt(A, toT, "I just feel tired all the time.")}, toT);
  add("Jordan talks to the therapist", {utt(J, toT, "I don't know what to say.")}, toT);
  add("ambiguous you without oracle opinion", {utt(A, toT, "You know how it is with work.")}, toT);
  add("ambiguous you resolved to partner", {utt(A, toT, "You know how it is with work.")}, toJ, std::nullopt, toJ);
  add("ambiguous you resolved to therapist", {utt(J, toT, "Do you think this can work?")}, toT, std::nullopt, toT);
  add("oracle may not pick the speaker", {utt(A, toT, "You know how it is with work.")}, toT, std::nullopt, toA);
  add("agent never answers themselves", {utt(J, toT, "Maybe. I'm not sure.")}, toT, std::nullopt, toJ);
  return c;
}

// ---- prompt anchors: (template file, phrase that must appear verbatim) ------------

struct Anchor {
  std::string file;
  std::string section;  // "" for the whole file
  std::string phrase;
};

inline std::vector<Anchor> prompt_anchors() {
  return {
      // stage classifier
      {"stage_classifier.txt", "", "Given the following couple therapy conversation, identify which stage the session is currently in."},
      {"stage_classifier.txt", "", "Respond with only the stage name."},
      {"stage_classifier.txt", "", "Signals: \"let's slow down\", \"stop\", \"calm down\", or open-ended emotion-focused questions."},
      {"stage_classifier.txt", "", "Session closes; therapist summarizes progress, mentions time ending, or schedules the next session."},
      // agent profiles
      {"agent_system.txt", "profile.Alex", "Alex tends to criticize, demand, and escalate when upset."},
      {"agent_system.txt", "profile.Alex", "pressures, nags, criticizes, demands, escalates quickly, uses direct language"},
      {"agent_system.txt", "profile.Jordan", "Jordan tends to withdraw, become silent, or defend themselves when pressured."},
      {"agent_system.txt", "profile.Jordan", "withdraws, becomes silent, defends, resists apologizing, uses passive-aggressive language"},
      // stage behaviours
      {"agent_system.txt", "behavior.Alex.ProblemRaising", "Takes the lead in bringing up issues."},
      {"agent_system.txt", "behavior.Jordan.ProblemRaising", "Becomes defensive or tries to minimize issues."},
      {"agent_system.txt", "behavior.Alex.Escalation", "Becomes more demanding and critical."},
      {"agent_system.txt", "behavior.Jordan.Escalation", "May shut down emotionally, use sarcasm, or make contemptuous remarks."},
      {"agent_system.txt", "behavior.Alex.Enactment", "Directly express feelings to Jordan."},
      {"agent_system.txt", "behavior.Jordan.WrapUp", "May express gratitude for feeling heard."},
      {"agent_system.txt", "behavior.Alex.WrapUp", "Still concerned about follow-through on agreements."},
      // speaker policy
      {"speaker_classifier.txt", "", "Determine who speaks next in a couples therapy conversation between Alex, Jordan, and the Therapist."},
      {"speaker_classifier.txt", "", "Therapist message is not directed at anyone"},
      // voice styles
      {"voice_style.txt", "", "Intense, urgent; voice cracks between anger and pleading; faster when frustrated, slower when hurt"},
      {"voice_style.txt", "", "Slow, hesitant, nervous; slight vocal tremor."},
      // difficulty
      {"agent_system.txt", "difficulty.Easy", "You are open to the trainee's interventions and show some flexibility."},
      {"agent_system.txt", "difficulty.Normal", "You respond realistically to the trainee's interventions with moderate resistance."},
      {"agent_system.txt", "difficulty.Hard", "You are highly resistant to the trainee's interventions, very slow to change, and deeply entrenched"},
      // judges
      {"judge_role.txt", "", "You are an expert evaluator for a couples therapy training simulator."},
      {"judge_role.txt", "", "Yes = clearly reflects the assigned role"},
      {"judge_stage.txt", "", "behavior for the current therapy stage."},
      {"judge_consistency.txt", "", "Alex and Jordan are a couple in couples therapy."},
      {"judge_consistency.txt", "", "that have a clear conflict with the current line."},
  };
}

// ---- randomized scripted sessions --------------------------------------------------

inline const std::vector<std::string>& therapist_pool() {
  static const std::vector<std::string> pool = {
      "Hello Alex and Jordan, welcome. How are you both today?",
      "What brings you here today?",
      "Alex, can you tell me more about what's been bothering you?",
      "Jordan, how do you see the problem?",
      "Jordan, you never seem to answer when Alex asks.",
      "Alex, you always raise your voice, don't you?",
      "Let's slow down for a moment.",
      "What are you feeling right now?",
      "Alex, tell Jordan how you feel.",
      "Can you turn to each other and share that?",
      "It sounds like you both feel alone in this.",
      "We're almost out of time. Let's summarize what we worked on.",
      "Let's schedule our next session.",
      "Okay.",
      "Hmm, go on.",
      "I hear a lot of frustration here.",
  };
  return pool;
}

struct PropertyViolations {
  std::size_t sessions = 0;
  std::size_t decisions = 0;
  std::size_t gate = 0;          // (a) Escalation at turn <= 5
  std::size_t force_checked = 0;  // sessions where (b) applied
  std::size_t force = 0;         // (b) missing ForceEscalation at turn 7
  std::size_t triple = 0;        // (c) three consecutive Escalation decisions
  std::size_t absorbing = 0;     // (d) left WrapUp
  std::size_t numbering = 0;     // turn numbers not 1..n
  std::vector<std::string> examples;
};

inline void check_session(const Session& s, PropertyViolations& v) {
  const auto& h = s.stage_history;
  bool escalated = false;
  Stage current = Stage::Greeting;
  int run = 0;
  bool wrapped = false;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const auto& d = h[i];
    ++v.decisions;
    if (d.therapist_turn != static_cast<int>(i) + 1) ++v.numbering;
    if (d.therapist_turn <= 5 && d.final_stage == Stage::Escalation) {
      ++v.gate;
      if (v.examples.size() < 5) v.examples.push_back(s.id + ": escalation at turn " + std::to_string(d.therapist_turn));
    }
    if (d.therapist_turn == 7 && current == Stage::ProblemRaising && !escalated) {
      ++v.force_checked;
      if (d.override_rule != OverrideRule::ForceEscalation || d.final_stage != Stage::Escalation) {
        ++v.force;
        if (v.examples.size() < 5) v.examples.push_back(s.id + ": no forced escalation at turn 7");
      }
    }
    run = d.final_stage == Stage::Escalation ? run + 1 : 0;
    if (run >= 3) {
      ++v.triple;
      if (v.examples.size() < 5) v.examples.push_back(s.id + ": three escalations ending at turn " + std::to_string(d.therapist_turn));
    }
    if (wrapped && d.final_stage != Stage::WrapUp) {
      ++v.absorbing;
      if (v.examples.size() < 5) v.examples.push_back(s.id + ": left wrap-up at turn " + std::to_string(d.therapist_turn));
    }
    wrapped = wrapped || d.final_stage == Stage::WrapUp;
    escalated = escalated || d.final_stage == Stage::Escalation;
    current = d.final_stage;
  }
}

// Runs `count` sessions against the scripted backend. The stage classifier
// answers with random stages (sometimes garbage, which exercises the fallback);
// one in three sessions is biased towards Problem Raising so the forced
// escalation at turn 7 is exercised often.
inline PropertyViolations run_random_sessions(std::size_t count, std::uint64_t seed) {
  PropertyViolations v;
  std::mt19937_64 rng(seed);
  const auto& lib = prompts::PromptLibrary::builtin();
  const auto& pool = therapist_pool();
  const std::vector<std::string> names = {"Greeting", "Problem Raising", "Escalation", "De-Escalation", "Enactment", "Wrap-up"};

  for (std::size_t n = 0; n < count; ++n) {
    const auto mode = rng() % 3;
    gateway::ScriptedBackend agents;
    agents.set_seed(rng());
    gateway::ScriptedBackend classifier;
    std::mt19937_64 crng(rng());
    classifier.add_rule([](const gateway::GatewayRequest& r) { return r.purpose == "stage"; },
                        [&crng, &names, mode](const gateway::GatewayRequest&) -> std::string {
                          const auto roll = crng() % 20;
                          if (roll == 0) return "";
                          if (roll == 1) return "no idea";
                          if (mode == 0 && roll < 14) return "Problem Raising";
                          return names[crng() % names.size()];
                        });
    classifier.add_rule([](const gateway::GatewayRequest& r) { return r.purpose == "speaker"; },
                        [&crng](const gateway::GatewayRequest&) -> std::string {
                          const char* labels[] = {"Alex", "Jordan", "therapist", "both", ""};
                          return labels[crng() % 5];
                        });
    Engine engine(lib, agents, &classifier);

    Session s;
    s.id = "prop-" + std::to_string(n);
    s.scenario = *lib.find_scenario(n % 2 ? "s1" : "s2");
    s.difficulty = static_cast<Difficulty>(rng() % 3);
    std::int64_t now = 0;
    SessionRunner runner(s, engine, [&now] { return ++now; });
    const EventSink sink = [](const TurnEvent&) {};

    const int turns = 7 + static_cast<int>(rng() % 12);
    for (int t = 0; t < turns; ++t) {
      const auto& text = pool[rng() % pool.size()];
      std::optional<Addressee> addr;
      if (rng() % 4 == 0) addr = static_cast<Addressee>(rng() % 3);
      runner.therapist_message(text, addr, sink);
      if (s.a2a.active) {
        if (rng() % 3 == 0) {
          int left = static_cast<int>(rng() % 4);
          if (!runner.run_a2a(sink, [&left] { return left-- <= 0; })) runner.interrupt(sink);
        } else {
          runner.run_a2a(sink);
        }
      }
    }
    ++v.sessions;
    check_session(s, v);
  }
  return v;
}

}  // namespace testsupport

#include "couplesim/cli/commands.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "couplesim/engine/runner.hpp"
#include "couplesim/engine/transcript_io.hpp"
#include "couplesim/eval/report.hpp"
#include "couplesim/service/server.hpp"
#include "couplesim/service/session_controller.hpp"
#include "couplesim/service/session_manager.hpp"
#include "couplesim/util/text.hpp"

namespace couplesim::cli {

using json = nlohmann::json;

namespace {

Scenario resolve_scenario(const prompts::PromptLibrary& lib, const std::string& id,
                          const std::optional<std::string>& custom_text) {
  if (custom_text) return Scenario{"custom", *custom_text};
  if (auto s = lib.find_scenario(id)) return *s;
  std::string known;
  for (const auto& info : lib.scenarios()) known += (known.empty() ? "" : ", ") + info.id;
  throw UsageError("unknown scenario \"" + id + "\" (known: " + known + ")");
}

template <typename F>
auto as_usage(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw UsageError(what + ": " + e.what());
  } catch (const json::exception& e) {
    throw UsageError(what + ": " + e.what());
  }
}

}  // namespace

// ---- replay -------------------------------------------------------------------

ReplayScript parse_replay_script(const json& j) {
  return as_usage("replay script", [&] {
    if (!j.is_object()) throw UsageError("replay script must be a JSON object");
    ReplayScript s;
    if (j.contains("custom_text")) {
      s.custom = true;
      s.scenario = j.at("custom_text").get<std::string>();
    } else {
      s.scenario = j.value("scenario", s.scenario);
    }
    if (j.contains("difficulty")) s.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
    s.seed = j.value("seed", std::uint64_t{0});
    if (!j.contains("turns") || !j.at("turns").is_array()) throw UsageError("replay script needs a \"turns\" array");
    for (const auto& t : j.at("turns")) {
      ReplayTurn turn;
      if (t.is_string()) {
        turn.text = t.get<std::string>();
      } else {
        turn.text = t.at("text").get<std::string>();
        if (t.contains("addressee") && !t.at("addressee").is_null()) {
          turn.addressee = parse_addressee(t.at("addressee").get<std::string>());
          if (*turn.addressee == Addressee::Therapist) throw UsageError("a therapist turn cannot address the therapist");
        }
        turn.pre_delay_ms = t.value("pre_delay_ms", std::int64_t{0});
        if (turn.pre_delay_ms < 0) throw UsageError("pre_delay_ms must be >= 0");
        if (t.contains("stage") && !t.at("stage").is_null()) turn.stage = parse_stage(t.at("stage").get<std::string>());
        if (t.contains("interrupt_after") && !t.at("interrupt_after").is_null()) {
          turn.interrupt_after = t.at("interrupt_after").get<int>();
          if (*turn.interrupt_after < 0) throw UsageError("interrupt_after must be >= 0");
        }
      }
      if (util::trim(turn.text).empty()) throw UsageError("replay turn text must not be empty");
      s.turns.push_back(std::move(turn));
    }
    if (s.turns.empty()) throw UsageError("replay script has no turns");
    return s;
  });
}

ReplayScript load_replay_script(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw UsageError("cannot read replay script " + file.string());
  return as_usage("replay script " + file.string(), [&] { return parse_replay_script(json::parse(in)); });
}

ReplayResult run_replay(const ReplayScript& script, const Config& cfg, const std::string& session_id) {
  const auto& lib = prompt_library(cfg);

  gateway::ScriptedBackend agents(scripted_banks(cfg));
  agents.set_seed(script.seed);

  // Unscripted stage turns go to the heuristic; the speaker oracle abstains.
  gateway::ScriptedBackend classifier(scripted_banks(cfg));
  classifier.add_rule([](const gateway::GatewayRequest& r) { return r.purpose == "stage"; },
                      [](const gateway::GatewayRequest&) { return std::string{}; });
  classifier.add_rule([](const gateway::GatewayRequest& r) { return r.purpose == "speaker"; },
                      [](const gateway::GatewayRequest&) { return std::string{}; });

  Engine engine(lib, agents, &classifier);

  Session session;
  session.id = session_id;
  session.scenario = resolve_scenario(lib, script.scenario,
                                      script.custom ? std::optional<std::string>(script.scenario) : std::nullopt);
  session.difficulty = script.difficulty;

  // Synthetic clock: one tick per utterance plus scripted delays.
  std::int64_t now = 0;
  SessionRunner runner(session, engine, [&now] { return ++now; });

  for (const auto& turn : script.turns) {
    now += turn.pre_delay_ms;
    if (turn.stage) classifier.queue_output("stage", std::string(display_name(*turn.stage)));

    int loop_lines = 0;
    const EventSink sink = [&](const TurnEvent& e) {
      if (const auto* err = std::get_if<EngineError>(&e)) throw std::runtime_error(err->code + ": " + err->message);
      if (std::holds_alternative<AgentMessage>(e)) ++loop_lines;
    };
    runner.therapist_message(turn.text, turn.addressee, sink);
    if (!session.a2a.active) continue;

    loop_lines = 0;
    if (turn.interrupt_after) {
      const int limit = *turn.interrupt_after;
      if (!runner.run_a2a(sink, [&] { return loop_lines >= limit; })) runner.interrupt(sink);
    } else {
      runner.run_a2a(sink);
    }
  }
  auto digest = transcript_digest(session);
  return {std::move(session), std::move(digest)};
}

// ---- play -----------------------------------------------------------------------

namespace {

std::string new_session_id() {
  std::random_device rd;
  std::ostringstream os;
  os << std::hex << std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::system_clock::now().time_since_epoch()).count()
     << '-' << (rd() & 0xffff);
  return os.str();
}

class PlayPrinter {
 public:
  explicit PlayPrinter(std::ostream& out) : out_(out) {}

  void operator()(const service::ServerEvent& e) {
    std::visit([this](const auto& ev) { print(ev); }, e);
    out_.flush();
  }

 private:
  void print(const AgentMessage& m) {
    const auto& u = m.utterance;
    out_ << '[' << display_name(u.stage) << "] " << to_string(u.speaker);
    if (u.emotion) out_ << " (" << to_string(*u.emotion) << ')';
    out_ << " -> " << to_string(u.addressee) << ": " << u.text << '\n';
  }
  void print(const StageChanged& s) {
    out_ << "-- stage: " << display_name(s.from) << " -> " << display_name(s.to);
    if (s.rule != OverrideRule::None) out_ << " (" << to_string(s.rule) << ')';
    out_ << '\n';
  }
  void print(const A2AStarted& a) {
    out_ << "-- Alex and Jordan are arguing (" << a.remaining
         << " exchanges). Enter continues, /interrupt stops, or type to step in.\n";
  }
  void print(const A2AEnded&) { out_ << "-- back to you\n"; }
  void print(const service::SessionClosed& c) { out_ << "-- session closed (" << c.reason << ")\n"; }
  void print(const service::ErrorEvent& e) { out_ << "!! " << e.code << ": " << e.message << '\n'; }
  void print(const service::SessionCreated&) {}

  std::ostream& out_;
};

struct PlayInput {
  enum class Kind { Message, Interrupt, Quit, Continue, Help } kind = Kind::Continue;
  std::string text;
  std::optional<Addressee> addressee;
};

// "/alex text", "/jordan text", "/both text", "/interrupt", "/quit", "/end",
// "/help", an empty line, or plain text.
PlayInput parse_play_line(const std::string& raw) {
  PlayInput in;
  const auto line = util::trim(raw);
  if (line.empty()) return in;
  if (line.front() != '/') {
    in.kind = PlayInput::Kind::Message;
    in.text = std::string(line);
    return in;
  }
  const auto space = line.find(' ');
  const auto cmd = util::to_lower(line.substr(0, space));
  const auto rest = space == std::string_view::npos ? std::string{} : std::string(util::trim(line.substr(space + 1)));
  if (cmd == "/interrupt") {
    in.kind = PlayInput::Kind::Interrupt;
  } else if (cmd == "/quit" || cmd == "/end") {
    in.kind = PlayInput::Kind::Quit;
  } else if (cmd == "/alex" || cmd == "/jordan" || cmd == "/both") {
    in.kind = rest.empty() ? PlayInput::Kind::Help : PlayInput::Kind::Message;
    in.text = rest;
    in.addressee = cmd == "/alex" ? Addressee::Alex : cmd == "/jordan" ? Addressee::Jordan : Addressee::Both;
  } else {
    in.kind = PlayInput::Kind::Help;
  }
  return in;
}

constexpr const char* kPlayHelp =
    "commands: <text> | /alex <text> | /jordan <text> | /both <text> | /interrupt | /quit\n";

}  // namespace

int cmd_play(const PlayOptions& opts, const Config& cfg, std::istream& in, std::ostream& out, std::ostream& err) {
  const auto& lib = prompt_library(cfg);
  const auto scenario = resolve_scenario(lib, opts.scenario, opts.custom_text);
  auto agents = make_gateway(opts.backend, cfg);
  // The scripted backend has no real classifier, so the heuristic decides.
  Engine engine(lib, *agents, opts.backend == BackendKind::Remote ? agents.get() : nullptr);

  std::optional<service::SessionStore> store;
  Session session;
  session.id = new_session_id();
  session.scenario = scenario;
  session.difficulty = opts.difficulty;
  if (opts.out) {
    store.emplace(*opts.out);
    store->create(session);
  }
  service::SessionController controller(std::move(session), engine, store ? &*store : nullptr);
  PlayPrinter printer(out);
  const service::ServerSink sink = [&](const service::ServerEvent& e) { printer(e); };

  out << "Session " << controller.session().id << " | scenario " << scenario.id << " | difficulty "
      << to_string(opts.difficulty) << '\n'
      << kPlayHelp;

  std::string line;
  auto read = [&](const char* prompt) -> std::optional<PlayInput> {
    out << prompt << std::flush;
    if (!std::getline(in, line)) return std::nullopt;
    return parse_play_line(line);
  };

  try {
    while (!controller.closed()) {
      if (controller.a2a_active()) {
        // Pause at every exchange boundary unless running unattended.
        int emitted = 0;
        const auto counting = [&](const service::ServerEvent& e) {
          if (std::holds_alternative<AgentMessage>(e)) ++emitted;
          sink(e);
        };
        InterruptProbe probe;
        if (!opts.auto_a2a)
          probe = [&] { return emitted > 0 && !controller.session().a2a.half_exchange; };
        if (controller.run_a2a(counting, probe)) continue;

        auto input = read("(loop) > ");
        if (!input || input->kind == PlayInput::Kind::Quit) break;
        if (input->kind == PlayInput::Kind::Interrupt) controller.handle_interrupt(sink);
        if (input->kind == PlayInput::Kind::Message)
          controller.handle_therapist_message({input->text, input->addressee}, sink);
        if (input->kind == PlayInput::Kind::Help) out << kPlayHelp;
        continue;
      }

      auto input = read("therapist> ");
      if (!input || input->kind == PlayInput::Kind::Quit) break;
      switch (input->kind) {
        case PlayInput::Kind::Message:
          controller.handle_therapist_message({input->text, input->addressee}, sink);
          break;
        case PlayInput::Kind::Help:
          out << kPlayHelp;
          break;
        default:
          break;
      }
    }
    if (!controller.closed()) controller.end_session(sink, "client");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  if (opts.out) out << "saved to " << transcript_path(*opts.out, controller.session().id).string() << '\n';
  return kExitOk;
}

// ---- replay command ---------------------------------------------------------------

int cmd_replay(const ReplayOptions& opts, const Config& cfg, std::ostream& out, std::ostream& err) {
  if (opts.backend != BackendKind::Scripted)
    throw UsageError("replay is deterministic only with the scripted backend");
  const auto script = load_replay_script(opts.script);
  ReplayResult result;
  try {
    result = run_replay(script, cfg, opts.script.stem().string());
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  for (const auto& u : result.session.transcript) {
    out << '[' << display_name(u.stage) << "] " << to_string(u.speaker);
    if (u.emotion) out << " (" << to_string(*u.emotion) << ')';
    out << " -> " << to_string(u.addressee) << ": " << u.text << '\n';
  }
  if (opts.out) {
    std::filesystem::create_directories(*opts.out);
    write_session(*opts.out, result.session, true);
  }
  out << "digest: " << result.digest << '\n';
  return kExitOk;
}

// ---- eval -------------------------------------------------------------------------

int cmd_eval(const EvalOptions& opts, const Config& cfg, std::ostream& out, std::ostream& err) {
  const auto& lib = prompt_library(cfg);
  std::unique_ptr<gateway::ModelGateway> judge;
  if (opts.judge == BackendKind::Remote) {
    judge = std::make_unique<gateway::RemoteBackend>(cfg.backend);
  } else if (opts.judge == BackendKind::Scripted) {
    auto scripted = std::make_unique<gateway::ScriptedBackend>(scripted_banks(cfg));
    eval::install_scripted_judge(*scripted);
    judge = std::move(scripted);
  }

  eval::ReportOptions ro;
  ro.corpus = opts.corpus;
  ro.annotations = opts.annotations;
  ro.baseline = opts.baseline;
  ro.judge = judge.get();
  ro.prompts = &lib;
  ro.max_in_flight = cfg.max_in_flight;
  ro.judge_consistency = opts.consistency;
  ro.yates = opts.yates;

  eval::FidelityReport report;
  try {
    report = eval::build_report(ro);
  } catch (const eval::EmptyCorpus& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  out << eval::to_text(report);
  if (opts.out) {
    std::ofstream f(*opts.out);
    if (!f) {
      err << "error: cannot write " << opts.out->string() << '\n';
      return kExitFailure;
    }
    f << eval::to_json(report).dump(2) << '\n';
  }
  return kExitOk;
}

// ---- serve ------------------------------------------------------------------------

int cmd_serve(const Config& cfg, std::ostream& out, std::ostream& err) {
  try {
    const auto& lib = prompt_library(cfg);
    // The service talks to the remote backend when a key is configured and
    // falls back to scripted agents otherwise, so it always starts.
    std::unique_ptr<gateway::ModelGateway> agents;
    gateway::ModelGateway* classifier = nullptr;
    if (std::getenv(cfg.backend.api_key_env.c_str())) {
      agents = make_gateway(BackendKind::Remote, cfg);
      classifier = agents.get();
    } else {
      agents = make_gateway(BackendKind::Scripted, cfg);
      err << "note: " << cfg.backend.api_key_env << " is not set; using scripted agents\n";
    }
    Engine engine(lib, *agents, classifier);

    service::ManagerConfig mc;
    mc.data_dir = cfg.data_dir;
    mc.idle_timeout = cfg.idle_timeout;
    mc.a2a_delay = cfg.a2a_delay;
    service::SessionManager manager(engine, lib, mc);

    service::Server server({cfg.bind, cfg.port, cfg.threads}, manager);
    const auto port = server.start();
    out << "listening on http://" << cfg.bind << ':' << port << " (ws: /ws)" << std::endl;
    server.run_until_signal();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace couplesim::cli

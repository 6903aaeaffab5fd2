#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "couplesim/cli/commands.hpp"

using namespace couplesim;
using namespace couplesim::cli;

int main(int argc, char** argv) {
  CLI::App app{"couplesim: simulated couple for practicing emotionally focused therapy"};
  app.require_subcommand(1);

  std::optional<std::string> config_file;
  app.add_option("-c,--config", config_file, "JSON config file")->check(CLI::ExistingFile);

  const auto difficulty_check = CLI::IsMember({"easy", "normal", "hard"}, CLI::ignore_case);
  const auto backend_check = CLI::IsMember({"scripted", "remote"}, CLI::ignore_case);

  // play
  auto* play = app.add_subcommand("play", "Interactive session in the terminal");
  std::string play_scenario = "s1";
  std::optional<std::string> play_custom;
  std::string play_difficulty = "normal";
  std::string play_backend = "scripted";
  std::optional<std::string> play_out;
  bool play_auto = false;
  play->add_option("-s,--scenario", play_scenario, "Built-in scenario id")->capture_default_str();
  play->add_option("--custom", play_custom, "Custom scenario text (overrides --scenario)");
  play->add_option("-d,--difficulty", play_difficulty, "easy|normal|hard")->check(difficulty_check)->capture_default_str();
  play->add_option("-b,--backend", play_backend, "scripted|remote")->check(backend_check)->capture_default_str();
  play->add_option("-o,--out", play_out, "Directory to save the session in");
  play->add_flag("--auto-loop", play_auto, "Do not pause inside agent-to-agent loops");

  // replay
  auto* replay = app.add_subcommand("replay", "Deterministic run of a scripted therapist session");
  std::string replay_script;
  std::string replay_backend = "scripted";
  std::optional<std::string> replay_out;
  replay->add_option("script", replay_script, "Replay script (JSON)")->required()->check(CLI::ExistingFile);
  replay->add_option("-b,--backend", replay_backend, "Only scripted is deterministic")->check(backend_check)->capture_default_str();
  replay->add_option("-o,--out", replay_out, "Directory to write the session files to");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP/WebSocket session service");
  std::optional<std::string> serve_bind;
  std::optional<std::uint16_t> serve_port;
  std::optional<std::string> serve_data;
  serve->add_option("--bind", serve_bind, "Bind address");
  serve->add_option("-p,--port", serve_port, "Port (0 = ephemeral)");
  serve->add_option("--data-dir", serve_data, "Session directory");

  // eval
  auto* evalc = app.add_subcommand("eval", "Fidelity report over a corpus of saved sessions");
  std::string eval_corpus;
  std::optional<std::string> eval_ann, eval_base, eval_out;
  std::string eval_judge = "scripted";
  bool eval_no_judge = false, eval_no_consistency = false, eval_no_yates = false;
  evalc->add_option("corpus", eval_corpus, "Directory of saved sessions")->required()->check(CLI::ExistingDirectory);
  evalc->add_option("-a,--annotations", eval_ann, "Human stage annotations (CSV)")->check(CLI::ExistingFile);
  evalc->add_option("--baseline", eval_base, "Baseline corpus for the chi-square tests")->check(CLI::ExistingDirectory);
  evalc->add_option("-j,--judge", eval_judge, "scripted|remote")->check(backend_check)->capture_default_str();
  evalc->add_flag("--no-judge", eval_no_judge, "Skip behavioural judging");
  evalc->add_flag("--no-consistency", eval_no_consistency, "Skip the consistency judge");
  evalc->add_flag("--no-yates", eval_no_yates, "Chi-square without continuity correction");
  evalc->add_option("-o,--out", eval_out, "Write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    auto cfg = load_config_or_default(config_file ? std::optional<std::filesystem::path>(*config_file) : std::nullopt);

    if (*play) {
      PlayOptions o;
      o.scenario = play_scenario;
      o.custom_text = play_custom;
      o.difficulty = parse_difficulty(play_difficulty);
      o.backend = parse_backend(play_backend);
      if (play_out) o.out = *play_out;
      o.auto_a2a = play_auto;
      return cmd_play(o, cfg, std::cin, std::cout, std::cerr);
    }
    if (*replay) {
      ReplayOptions o;
      o.script = replay_script;
      o.backend = parse_backend(replay_backend);
      if (replay_out) o.out = *replay_out;
      return cmd_replay(o, cfg, std::cout, std::cerr);
    }
    if (*serve) {
      if (serve_bind) cfg.bind = *serve_bind;
      if (serve_port) cfg.port = *serve_port;
      if (serve_data) cfg.data_dir = *serve_data;
      return cmd_serve(cfg, std::cout, std::cerr);
    }
    if (*evalc) {
      EvalOptions o;
      o.corpus = eval_corpus;
      if (eval_ann) o.annotations = *eval_ann;
      if (eval_base) o.baseline = *eval_base;
      o.judge = eval_no_judge ? std::nullopt : std::optional<BackendKind>(parse_backend(eval_judge));
      if (eval_out) o.out = *eval_out;
      o.consistency = !eval_no_consistency;
      o.yates = !eval_no_yates;
      return cmd_eval(o, cfg, std::cout, std::cerr);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

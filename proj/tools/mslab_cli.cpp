#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>

#include "mslab/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Two-state magnetic Schrodinger forward/inverse experiments"};
  std::string command, config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  app.add_option("command", command, "forward | carleman-check | probe-check | simulate | stability | reconstruct | selftest")
      ->required()
      ->check(CLI::IsMember(mslab::command_names()));
  app.add_option("--config", config_path, "INI experiment config (defaults when omitted)");
  app.add_option("--out", out_dir, "output directory, overrides [output] dir");
  app.add_option("--seed", seed, "sampling seed, overrides [sampling] seed");
  app.add_option("--threads", threads, "worker threads, overrides [run] threads");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : mslab::kExitConfig;
  }

  mslab::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = mslab::parse_config(config_path);
  } catch (const mslab::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return mslab::kExitConfig;
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  return mslab::run_command(command, cfg, std::cerr);
}

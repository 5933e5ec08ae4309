#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "laguerre/cli.hpp"

using namespace laguerre;

int main(int argc, char** argv) {
  CLI::App app{"Laguerre diagrams with prescribed cell volumes"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> rng_seed;
  std::optional<int> threads;
  std::optional<std::string> output_dir;
  for (const char* name : {"generate", "fit", "diagram", "report"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run config (JSON)")->required();
    sub->add_option("--rng-seed", rng_seed, "override the config rng_seed");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--output-dir", output_dir, "override output.directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::string mode = app.get_subcommands().front()->get_name();

  cli::RunConfig config;
  try {
    config = cli::load_config(config_path);
    if (config.mode != cli::mode_from_string(mode))
      throw ConfigError("config mode '" + std::string(cli::to_string(config.mode)) +
                        "' does not match the '" + mode + "' command");
  } catch (const Error& e) {
    const int code = cli::exit_code_for(e);
    std::cerr << nlohmann::json{{"error", e.kind()}, {"message", e.what()}, {"exit_code", code}}.dump()
              << std::endl;
    return code;
  }
  if (rng_seed) config.rng_seed = *rng_seed;
  if (const char* env = std::getenv("LAGUERRE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) config.threads = n;
  }
  if (threads) config.threads = *threads;
  if (output_dir) config.output_dir = *output_dir;
  return cli::run(config, std::cerr);
}

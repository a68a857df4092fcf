#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "pilot/cli/commands.hpp"
#include "pilot/error.hpp"

int main(int argc, char** argv) {
  using namespace pilot::cli;

  CLI::App app{"PU-learning vulnerability detection pipeline"};
  app.require_subcommand(1, 1);

  std::string workdir = ".";
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> overrides;
  bool quiet = false;
  app.add_option("--workdir", workdir, "Root for every relative path")->capture_default_str();
  app.add_option("--config", config_path, "YAML run config, relative to the workdir");
  app.add_option("--seed", seeds, "Labeling seed(s); replaces the config's seeds");
  app.add_option("--set", overrides, "Override a config key, e.g. --set scar.label_frequency=0.1");
  app.add_flag("-q,--quiet", quiet, "Only print errors");

  const std::vector<std::pair<std::string, std::string>> help = {
      {"prep", "Validate the corpus, split it, and write embeddings"},
      {"simulate-pu", "Hide labels with SCAR for each seed"},
      {"select", "Prototype negative selection and progressive expansion"},
      {"train", "Final training stage"},
      {"evaluate", "Test-split metrics document"},
      {"report", "Pseudo-labels that contradict ground truth, as CSV"},
      {"sweep", "Full pipeline over the declared grid"}};
  for (const auto& [name, text] : help) app.add_subcommand(name, text);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  if (quiet) spdlog::set_level(spdlog::level::err);

  const std::string command = app.get_subcommands().front()->get_name();
  RunConfig cfg;
  try {
    cfg = config_path.empty() ? parse_config_text("", overrides)
                              : parse_config(std::filesystem::path(workdir) / config_path, overrides);
    if (!seeds.empty()) cfg.seeds = seeds;
  } catch (const pilot::Error& e) {
    spdlog::error("config: {}", e.what());
    return kExitUsage;
  }

  Context ctx;
  ctx.workdir = workdir;
  ctx.out = quiet ? nullptr : &std::cout;
  return dispatch(command, cfg, ctx);
}

#include <CLI11.hpp>
#include <cstdio>

#include "semtrack/commands.hpp"
#include "semtrack/error.hpp"
#include "semtrack/log.hpp"

using namespace semtrack;

namespace {

void add_shared(CLI::App* cmd, RunOptions& o, std::string& config, std::uint64_t& seed) {
  cmd->add_option("--config", config, "key = value settings file (overrides built-in defaults)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", seed, "master seed (overrides the config file)");
  cmd->add_option("--out", o.out, "output directory (created when missing)");
  cmd->add_flag("--no-adapt", o.no_adapt, "disable online adaptation");
  cmd->add_flag("--no-netc", o.no_netc, "skip category gating and track with one fixed branch");
  cmd->add_option("--branch-override", o.branch_override, "NetT branch to use for every sequence");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semtrack: category-aware tracking on synthetic or OTB-style sequences"};
  app.require_subcommand(1);
  RunOptions o;
  std::string config;
  std::uint64_t seed = 0;
  bool quiet = false, verbose = false;
  app.add_flag("-q,--quiet", quiet, "only report errors");
  app.add_flag("-v,--verbose", verbose, "debug logging");

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset under <out>/train and <out>/test");
  CLI::App* train = app.add_subcommand("train", "offline training; writes model.bin and train_report.json");
  CLI::App* track = app.add_subcommand("track", "track every sequence; writes results/ and diagnostics.json");
  CLI::App* eval = app.add_subcommand("eval", "score result files; writes report.json and success.csv");
  for (CLI::App* cmd : {gen, train, track, eval}) add_shared(cmd, o, config, seed);
  train->add_option("--data", o.data, "folder of labelled sequences")->required()->check(CLI::ExistingDirectory);
  track->add_option("--data", o.data, "folder of sequences")->required()->check(CLI::ExistingDirectory);
  track->add_option("--model", o.model, "model file from train")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", o.data, "folder of sequences with ground truth")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--results", o.results, "folder of <sequence>.txt result files")
      ->required()
      ->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  if (!config.empty()) o.config = config;
  for (CLI::App* cmd : {gen, train, track, eval}) {
    if (cmd->parsed() && cmd->count("--seed")) o.seed = seed;
  }
  if (quiet) set_log_level(LogLevel::kQuiet);
  if (verbose) set_log_level(LogLevel::kDebug);

  try {
    CommandResult r;
    if (gen->parsed()) r = cmd_gen(o);
    else if (train->parsed()) r = cmd_train(o);
    else if (track->parsed()) r = cmd_track(o);
    else r = cmd_eval(o);
    for (const std::string& e : r.errors) std::fprintf(stderr, "error: %s\n", e.c_str());
    return r.ok() ? 0 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

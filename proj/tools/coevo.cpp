#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coevo/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Competitive coevolution of attack and defense strategies"};
  app.require_subcommand(1);

  std::string config, store, out_dir = "establo", filter = "best-per-generation", run_id, grammar;
  std::uint64_t seed = 0;
  std::size_t stride = 5;
  std::vector<std::string> scenarios;
  bool quiet = false;

  auto* run = app.add_subcommand("run", "Execute the configured runs and store them");
  run->add_option("--config", config, "Experiment config (INI)")->required();
  auto* run_seed = run->add_option("--seed", seed, "Override the base seed");
  run->add_option("--store", store, "Results store root");
  run->add_flag("--quiet", quiet, "Print nothing on success");

  auto* est = app.add_subcommand("establo", "Rank champions of all stored runs");
  est->add_option("--store", store, "Results store root");
  est->add_option("--filter", filter, "best-per-generation | best-per-run | pareto-per-run");
  est->add_option("--stride", stride, "Keep every k-th generation");
  est->add_option("--scenario", scenarios, "Evaluation scenario (repeatable)");
  est->add_option("--out", out_dir, "Report directory");
  auto* est_seed = est->add_option("--seed", seed, "Tournament seed");
  est->add_flag("--quiet", quiet, "Print nothing on success");

  auto* ins = app.add_subcommand("inspect", "Summarize a stored run");
  ins->add_option("run_id", run_id, "Run id")->required();
  ins->add_option("--store", store, "Results store root");

  auto* val = app.add_subcommand("validate-grammar", "Parse a BNF grammar file");
  val->add_option("grammar", grammar, "Grammar file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      coevo::RunOptions opt;
      if (run_seed->count()) opt.seed = seed;
      opt.store = store;
      opt.quiet = quiet;
      coevo::cmd_run(config, opt, std::cout);
    } else if (est->parsed()) {
      coevo::EstabloOptions opt;
      auto f = coevo::parse_filter(filter);
      if (!f) throw coevo::ConfigError("unknown filter '" + filter + "'");
      opt.store = store;
      opt.filter = *f;
      opt.stride = stride;
      for (const auto& s : scenarios) opt.scenarios.emplace_back(s);
      opt.out_dir = out_dir;
      if (est_seed->count()) opt.seed = seed;
      opt.quiet = quiet;
      coevo::cmd_establo(opt, std::cout);
    } else if (ins->parsed()) {
      coevo::cmd_inspect(store, run_id, std::cout);
    } else if (val->parsed()) {
      coevo::cmd_validate_grammar(grammar, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

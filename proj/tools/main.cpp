#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cbm/commands.hpp"

int main(int argc, char** argv) {
  using cbm::harness::CliOptions;

  CLI::App app{"Context-bridge recurrent stack: training and verification harness"};
  app.require_subcommand(0, 1);

  CliOptions opts;
  std::uint64_t seed_value = 0;
  bool print_defaults = false;
  app.add_flag("--print-defaults", print_defaults, "print the default configuration and exit");

  std::vector<CLI::App*> subs;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "INI configuration file");
    sub->add_option("--seed", seed_value, "override run.seed");
    sub->add_option("--set", opts.overrides, "override one key, e.g. --set optim.lr=0.001")
        ->allow_extra_args(false);
    sub->add_option("--out", opts.out_dir, "output directory (config.ini, metrics.csv, checkpoint.bin)");
    subs.push_back(sub);
  };

  CLI::App* train = app.add_subcommand("train", "train a model and write artifacts to --out");
  add_common(train);
  train->add_option("--resume", opts.resume, "checkpoint to continue from (config is read from it)");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("checkpoint", opts.checkpoint, "checkpoint file to evaluate")->required();
  eval->add_option("--data", opts.data_spec, "'train', 'test' (default) or a dataset container path");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  add_common(gradcheck);
  gradcheck->add_option("--instances", opts.instances, "instances per primitive");
  gradcheck->add_flag("--inject-fault", opts.inject_fault)->group("");  // negative control, hidden

  CLI::App* ablate = app.add_subcommand("ablate", "one-factor-at-a-time sweep over merge, dropout and coherence");
  add_common(ablate);

  CLI11_PARSE(app, argc, argv);

  for (CLI::App* sub : subs)
    if (sub->parsed() && sub->count("--seed") > 0) opts.seed = seed_value;

  try {
    if (print_defaults) {
      std::cout << cbm::harness::format_config(cbm::harness::RunConfig{});
      return 0;
    }
    if (train->parsed()) return cbm::harness::cmd_train(opts, std::cout);
    if (eval->parsed()) return cbm::harness::cmd_eval(opts, std::cout);
    if (gradcheck->parsed()) return cbm::harness::cmd_gradcheck(opts, std::cout);
    if (ablate->parsed()) return cbm::harness::cmd_ablate(opts, std::cout);
    std::cout << app.help();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

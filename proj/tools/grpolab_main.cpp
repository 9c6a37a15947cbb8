#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "grpolab/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"grpolab: group-relative policy optimization laboratory"};
  app.require_subcommand(1);

  grpolab::app::RunOptions options;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string method;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* config_opt = cmd->add_option("--config", options.config_path,
                                       "path to the JSON config file");
    if (needs_config) config_opt->required();
    cmd->add_option("--out", options.out_dir, "output directory")
        ->default_val("out");
    cmd->add_option("--seed", seed, "seed override")
        ->each([&](const std::string&) { seed_set = true; });
  };

  auto* train = app.add_subcommand("train", "run GRPO or SFT training");
  add_common(train, true);
  train->add_option("--method", method, "grpo or sft (overrides config)");
  train->add_flag("--trace", options.trace,
                  "dump per-group objective terms to trace.jsonl");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on test records");
  add_common(eval, true);

  auto* rewardcmd =
      app.add_subcommand("reward", "score a batch of tagged responses");
  std::string reward_in;
  std::string reward_out = "reward_scored.jsonl";
  rewardcmd->add_option("--in", reward_in, "input JSONL batch")->required();
  rewardcmd->add_option("--out", reward_out, "output JSONL path");

  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference validation of the analytic gradients");
  int trials = 100;
  bool inject_fault = false;
  std::uint64_t gradcheck_seed = 0;
  gradcheck->add_option("--trials", trials, "number of randomized trials");
  gradcheck->add_option("--seed", gradcheck_seed, "seed");
  gradcheck->add_flag("--inject-fault", inject_fault,
                      "deliberately corrupt the analytic gradient (test hook)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic task family");
  add_common(synth, false);

  CLI11_PARSE(app, argc, argv);

  if (seed_set) options.seed = seed;
  if (!method.empty()) options.method = method;

  try {
    if (train->parsed()) return grpolab::app::cmd_train(options);
    if (eval->parsed()) return grpolab::app::cmd_eval(options);
    if (rewardcmd->parsed()) return grpolab::app::cmd_reward(reward_in, reward_out);
    if (gradcheck->parsed()) {
      return grpolab::app::cmd_gradcheck(gradcheck_seed, trials, inject_fault);
    }
    if (synth->parsed()) {
      return grpolab::app::cmd_synth(options.config_path, options.out_dir,
                                     options.seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace grpolab::app {

// Command-line surface shared by the subcommands. Flags override the
// corresponding config-file fields.
struct RunOptions {
  std::string config_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  bool trace = false;
};

// Each returns a process exit status (0 on success) and reports problems on
// stderr. Configuration errors raise std::runtime_error with a message naming
// the offending field; the CLI wrapper converts that to a nonzero exit.
int cmd_train(const RunOptions& options);
int cmd_eval(const RunOptions& options);
int cmd_reward(const std::filesystem::path& input,
               const std::filesystem::path& output);
int cmd_gradcheck(std::uint64_t seed, int trials, bool inject_fault);
int cmd_synth(const std::string& config_path,
              const std::filesystem::path& out_dir,
              std::optional<std::uint64_t> seed);

}  // namespace grpolab::app

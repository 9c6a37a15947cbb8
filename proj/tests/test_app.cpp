#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "grpolab/app.hpp"

using namespace grpolab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() /
             ("grpolab_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

fs::path write_file(const fs::path& dir, const std::string& name,
                    const std::string& content) {
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << content;
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text) lines += c == '\n' ? 1 : 0;
  return lines;
}

constexpr const char* kBanditTrainConfig = R"({
  "method": "grpo",
  "dataset": {"kind": "bandit", "count": 8, "num_options": 4, "gt_index": 1},
  "steps": 20,
  "seed": 7,
  "learning_rate": 0.1
})";

}  // namespace

TEST_CASE("cmd_train: grpo run writes checkpoint, metrics, resolved config") {
  TempDir dir("train");
  app::RunOptions options;
  options.config_path = write_file(dir.path, "config.json", kBanditTrainConfig);
  options.out_dir = dir.path / "out";
  options.trace = true;

  CHECK(app::cmd_train(options) == 0);
  CHECK(fs::exists(options.out_dir / "checkpoint.json"));
  CHECK(fs::exists(options.out_dir / "resolved_config.json"));
  const std::string metrics = read_file(options.out_dir / "metrics.jsonl");
  CHECK(count_lines(metrics) == 20);
  CHECK(metrics.find("\"mean_reward\"") != std::string::npos);
  // one trace record per group: steps x batch_size
  const std::string trace = read_file(options.out_dir / "trace.jsonl");
  CHECK(count_lines(trace) == 20 * 2);
  CHECK(trace.find("\"advantages\"") != std::string::npos);
}

TEST_CASE("cmd_train: identical config and seed give bit-identical artifacts") {
  TempDir dir("determinism");
  const fs::path config =
      write_file(dir.path, "config.json", kBanditTrainConfig);
  app::RunOptions a{config.string(), dir.path / "a", {}, {}, false};
  app::RunOptions b{config.string(), dir.path / "b", {}, {}, false};
  REQUIRE(app::cmd_train(a) == 0);
  REQUIRE(app::cmd_train(b) == 0);
  CHECK(read_file(a.out_dir / "metrics.jsonl") ==
        read_file(b.out_dir / "metrics.jsonl"));
  CHECK(read_file(a.out_dir / "checkpoint.json") ==
        read_file(b.out_dir / "checkpoint.json"));
}

TEST_CASE("cmd_train: sft with zero learning rate gives a flat loss column") {
  TempDir dir("sft");
  app::RunOptions options;
  options.config_path = write_file(dir.path, "config.json", R"({
    "method": "sft",
    "dataset": {"kind": "bandit", "count": 8, "num_options": 4, "gt_index": 1},
    "steps": 12,
    "seed": 3,
    "learning_rate": 0.0
  })");
  options.out_dir = dir.path / "out";
  REQUIRE(app::cmd_train(options) == 0);

  std::istringstream metrics(read_file(options.out_dir / "metrics.jsonl"));
  std::string first_line, line;
  int rows = 0;
  std::string first_loss;
  while (std::getline(metrics, line)) {
    ++rows;
    const auto pos = line.find("\"loss\":");
    REQUIRE(pos != std::string::npos);
    const auto end = line.find_first_of(",}", pos);
    const std::string loss = line.substr(pos, end - pos);
    if (first_loss.empty()) {
      first_loss = loss;
    } else {
      CHECK(loss == first_loss);
    }
  }
  CHECK(rows == 12);
}

TEST_CASE("cmd_train: missing dataset path names the field") {
  TempDir dir("badconfig");
  app::RunOptions options;
  options.config_path = write_file(dir.path, "config.json",
                                   R"({"dataset": {"kind": "jsonl"}})");
  options.out_dir = dir.path / "out";
  CHECK_THROWS_WITH_AS(app::cmd_train(options),
                       doctest::Contains("dataset.train"), std::runtime_error);
}

TEST_CASE("cmd_synth then cmd_eval produce a table-shaped report") {
  TempDir dir("pipeline");
  REQUIRE(app::cmd_synth("", dir.path / "synth", 11) == 0);
  CHECK(fs::exists(dir.path / "synth" / "train.jsonl"));
  CHECK(fs::exists(dir.path / "synth" / "id_test.jsonl"));
  CHECK(fs::exists(dir.path / "synth" / "ood_test.jsonl"));

  // train briefly on the generated family, then evaluate the checkpoint
  app::RunOptions train_options;
  train_options.config_path = write_file(dir.path, "train.json", R"({
    "method": "grpo",
    "dataset": {"kind": "jsonl", "train": ")" +
      (dir.path / "synth" / "train.jsonl").string() + R"("},
    "steps": 10,
    "seed": 5
  })");
  train_options.out_dir = dir.path / "train_out";
  REQUIRE(app::cmd_train(train_options) == 0);

  app::RunOptions eval_options;
  eval_options.config_path = write_file(dir.path, "eval.json", R"({
    "checkpoint": ")" + (dir.path / "train_out" / "checkpoint.json").string() +
      R"(",
    "records": [")" + (dir.path / "synth" / "id_test.jsonl").string() + R"("],
    "ood_records": [")" + (dir.path / "synth" / "ood_test.jsonl").string() +
      R"("],
    "method_label": "grpo",
    "seen_samples": 600
  })");
  eval_options.out_dir = dir.path / "eval_out";
  REQUIRE(app::cmd_eval(eval_options) == 0);

  const std::string table = read_file(eval_options.out_dir / "report.txt");
  CHECK(table.find("synth_id") != std::string::npos);
  CHECK(table.find("synth_ood") != std::string::npos);
  CHECK(table.find("Average") != std::string::npos);
  CHECK(fs::exists(eval_options.out_dir / "report.json"));
}

TEST_CASE("cmd_eval: missing OOD records is a warning, not a failure") {
  TempDir dir("evalwarn");
  REQUIRE(app::cmd_synth("", dir.path / "synth", 11) == 0);
  app::RunOptions train_options;
  train_options.config_path =
      write_file(dir.path, "train.json", kBanditTrainConfig);
  train_options.out_dir = dir.path / "train_out";
  REQUIRE(app::cmd_train(train_options) == 0);

  app::RunOptions eval_options;
  eval_options.config_path = write_file(dir.path, "eval.json", R"({
    "checkpoint": ")" + (dir.path / "train_out" / "checkpoint.json").string() +
      R"(",
    "records": [")" + (dir.path / "synth" / "id_test.jsonl").string() + R"("]
  })");
  eval_options.out_dir = dir.path / "eval_out";
  CHECK(app::cmd_eval(eval_options) == 0);
  const std::string report = read_file(eval_options.out_dir / "report.json");
  CHECK(report.find("ID-only") != std::string::npos);
}

TEST_CASE("cmd_reward: batch scoring mirrors input and flags bad lines") {
  TempDir dir("reward");
  const fs::path input = write_file(
      dir.path, "batch.jsonl",
      R"({"response":"<think>margins are clean</think>\n<answer>B, no acute finding.</answer>","options":["Focal lesion","Diffuse opacity","Linear artifact","Normal study"],"gt_letter":"B"}
{"response":"<think>t</think>\n<answer>A</answer>","options":["Pulmonary nodule","Pleural effusion"],"gt_letter":"A"}
)");
  const fs::path output = dir.path / "scored.jsonl";
  CHECK(app::cmd_reward(input, output) == 0);
  const std::string scored = read_file(output);
  CHECK(count_lines(scored) == 2);
  CHECK(scored.find("\"total\":1.5") != std::string::npos);
  CHECK(scored.find("\"total\":2.0") != std::string::npos);
  CHECK(scored.find("\"match_kind\":\"partial\"") != std::string::npos);

  SUBCASE("empty input file gives empty output and success") {
    const fs::path empty = write_file(dir.path, "empty.jsonl", "");
    CHECK(app::cmd_reward(empty, dir.path / "empty_out.jsonl") == 0);
    CHECK(read_file(dir.path / "empty_out.jsonl").empty());
  }

  SUBCASE("line missing gt_letter produces an error record and nonzero exit") {
    const fs::path bad = write_file(
        dir.path, "bad.jsonl",
        R"({"response":"x","options":["a b","c d"]}
{"response":"<think>t</think>\n<answer>A</answer>","options":["a b","c d"],"gt_letter":"A"}
)");
    const fs::path bad_out = dir.path / "bad_out.jsonl";
    CHECK(app::cmd_reward(bad, bad_out) == 1);
    const std::string out = read_file(bad_out);
    CHECK(count_lines(out) == 2);
    CHECK(out.find("\"line\":1") != std::string::npos);
    CHECK(out.find("gt_letter") != std::string::npos);
  }
}

TEST_CASE("cmd_gradcheck: passes, warns on zero trials, detects faults") {
  CHECK(app::cmd_gradcheck(3, 10, false) == 0);
  CHECK(app::cmd_gradcheck(3, 0, false) == 0);
  CHECK(app::cmd_gradcheck(3, 5, true) == 1);
}

#include "grpolab/app.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <span>
#include <sstream>

#include <json.hpp>

#include "grpolab/dataset.hpp"
#include "grpolab/eval.hpp"
#include "grpolab/gradcheck.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/reward.hpp"
#include "grpolab/trainer.hpp"

namespace grpolab::app {

namespace {

using nlohmann::json;

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + path);
  }
  try {
    json j;
    in >> j;
    return j;
  } catch (const std::exception& e) {
    throw std::runtime_error("config file is not valid JSON: " + path + ": " +
                             e.what());
  }
}

grpo::GrpoConfig config_from_json(const json& j,
                                  std::optional<std::uint64_t> seed_override) {
  grpo::GrpoConfig config;
  config.group_size = j.value("group_size", config.group_size);
  config.clip_eps = j.value("clip_eps", config.clip_eps);
  config.kl_beta = j.value("kl_beta", config.kl_beta);
  config.std_floor = j.value("std_floor", config.std_floor);
  config.learning_rate = j.value("learning_rate", config.learning_rate);
  config.steps = j.value("steps", config.steps);
  config.batch_size = j.value("batch_size", config.batch_size);
  config.old_refresh_every = j.value("old_refresh_every", config.old_refresh_every);
  config.seed = j.value("seed", config.seed);
  if (seed_override) config.seed = *seed_override;
  config.validate();
  return config;
}

json config_to_json(const grpo::GrpoConfig& config) {
  return json{{"group_size", config.group_size},
              {"clip_eps", config.clip_eps},
              {"kl_beta", config.kl_beta},
              {"std_floor", config.std_floor},
              {"learning_rate", config.learning_rate},
              {"steps", config.steps},
              {"batch_size", config.batch_size},
              {"old_refresh_every", config.old_refresh_every},
              {"seed", config.seed}};
}

data::FamilySpec family_from_json(const json& j) {
  data::FamilySpec spec = data::default_family(false);
  if (j.contains("name")) spec.name = j.at("name").get<std::string>();
  if (j.contains("findings")) {
    spec.findings = j.at("findings").get<std::vector<std::string>>();
  }
  if (j.contains("surfaces")) {
    spec.surfaces = j.at("surfaces").get<std::vector<std::string>>();
  }
  spec.options_per_record = j.value("options_per_record", spec.options_per_record);
  spec.ood_shift = j.value("ood_shift", spec.ood_shift);
  return spec;
}

std::vector<data::VqaRecord> dataset_from_config(const json& j,
                                                 std::uint64_t seed) {
  if (!j.contains("dataset")) {
    throw std::runtime_error("config missing required field 'dataset'");
  }
  const json& d = j.at("dataset");
  const std::string kind = d.value("kind", "");
  if (kind == "bandit") {
    return data::generate_bandit_records(d.value("count", 16),
                                         d.value("num_options", 4),
                                         d.value("gt_index", 1));
  }
  if (kind == "family") {
    return data::generate_synthetic_family(family_from_json(d),
                                           d.value("count", 600),
                                           d.value("seed", seed));
  }
  if (kind == "jsonl") {
    if (!d.contains("train")) {
      throw std::runtime_error(
          "config missing required field 'dataset.train' (path to the "
          "training records)");
    }
    return data::load_records_file(d.at("train").get<std::string>());
  }
  throw std::runtime_error(
      "config field 'dataset.kind' must be one of bandit, family, jsonl");
}

// Category vocabulary for the policy: explicit list, else distinct record
// categories in first-appearance order.
std::vector<std::string> categories_for(const json& j,
                                        std::span<const data::VqaRecord> records) {
  if (j.contains("categories")) {
    return j.at("categories").get<std::vector<std::string>>();
  }
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (!r.category.empty() &&
        std::find(out.begin(), out.end(), r.category) == out.end()) {
      out.push_back(r.category);
    }
  }
  return out;
}

std::string grpo_metrics_line(const train::GrpoStepMetrics& m) {
  return json{{"step", m.step},
              {"mean_reward", m.mean_reward},
              {"format_rate", m.format_rate},
              {"exact_rate", m.exact_rate},
              {"mean_kl", m.mean_kl},
              {"objective", m.objective}}
      .dump();
}

std::string sft_metrics_line(const train::SftStepMetrics& m) {
  return json{{"step", m.step}, {"loss", m.loss}}.dump();
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write output file: " + path.string());
  }
  return out;
}

}  // namespace

int cmd_train(const RunOptions& options) {
  const json j = load_config(options.config_path);
  const grpo::GrpoConfig config = config_from_json(j, options.seed);
  std::string method = options.method.value_or(j.value("method", "grpo"));
  if (method != "grpo" && method != "sft") {
    throw std::runtime_error("config field 'method' must be grpo or sft, got '" +
                             method + "'");
  }

  const std::vector<data::VqaRecord> records =
      dataset_from_config(j, config.seed);
  policy::ToyTemplatePolicy policy(categories_for(j, records));

  std::filesystem::create_directories(options.out_dir);
  json resolved = j;
  resolved.update(config_to_json(config));
  resolved["method"] = method;
  open_out(options.out_dir / "resolved_config.json") << resolved.dump(2) << '\n';

  std::ofstream metrics = open_out(options.out_dir / "metrics.jsonl");
  train::TrainState state;
  try {
    if (method == "grpo") {
      std::ofstream trace_out;
      train::TraceFn trace;
      if (options.trace) {
        trace_out = open_out(options.out_dir / "trace.jsonl");
        trace = [&trace_out](const grpo::RolloutGroup& group,
                             const grpo::GroupTerms& terms) {
          trace_out << train::trace_record(group, terms) << '\n';
        };
      }
      state = train::train_grpo(records, policy, config, trace);
      for (const auto& m : state.grpo_metrics) {
        metrics << grpo_metrics_line(m) << '\n';
      }
    } else {
      state = train::train_sft(records, policy, config);
      for (const auto& m : state.sft_metrics) {
        metrics << sft_metrics_line(m) << '\n';
      }
    }
  } catch (const train::TrainingAbort& e) {
    std::cerr << "offending group: " << e.group_dump() << '\n';
    throw;
  }

  policy::save_policy(policy, options.out_dir / "checkpoint.json");
  std::cout << "trained " << method << " for " << state.steps_completed
            << " steps; artifacts in " << options.out_dir.string() << '\n';
  return 0;
}

int cmd_eval(const RunOptions& options) {
  const json j = load_config(options.config_path);
  if (!j.contains("checkpoint")) {
    throw std::runtime_error("config missing required field 'checkpoint'");
  }
  const policy::ToyTemplatePolicy policy =
      policy::load_policy(j.at("checkpoint").get<std::string>());

  if (!j.contains("records")) {
    throw std::runtime_error(
        "config missing required field 'records' (list of record files)");
  }
  std::vector<data::VqaRecord> records;
  for (const auto& path : j.at("records").get<std::vector<std::string>>()) {
    auto loaded = data::load_records_file(path);
    records.insert(records.end(), loaded.begin(), loaded.end());
  }
  bool ood_absent = false;
  if (j.contains("ood_records")) {
    for (const auto& path : j.at("ood_records").get<std::vector<std::string>>()) {
      auto loaded = data::load_records_file(path);
      records.insert(records.end(), loaded.begin(), loaded.end());
    }
  } else {
    ood_absent = true;
  }

  const std::string decoding = j.value("decoding", "greedy");
  const std::uint64_t seed = options.seed.value_or(j.value("seed", 0));
  eval::EvalReport report = eval::evaluate(
      policy, records,
      decoding == "sampled" ? eval::Decoding::Sampled : eval::Decoding::Greedy,
      seed, options.method.value_or(j.value("method_label", "checkpoint")),
      j.value("case_sensitive", false));
  if (j.contains("seen_samples")) {
    report.seen_samples = j.at("seen_samples").get<long>();
  }
  if (ood_absent) {
    report.warnings.push_back("no 'ood_records' configured; ID-only report");
  }

  std::filesystem::create_directories(options.out_dir);
  const std::string table = eval::render_table(report);
  open_out(options.out_dir / "report.txt") << table;
  open_out(options.out_dir / "report.json")
      << eval::report_json_string(report) << '\n';
  std::cout << table;
  for (const auto& w : report.warnings) {
    std::cerr << "warning: " << w << '\n';
  }
  return 0;
}

int cmd_reward(const std::filesystem::path& input,
               const std::filesystem::path& output) {
  std::ifstream in(input);
  if (!in) {
    throw std::runtime_error("cannot open reward batch: " + input.string());
  }
  std::ofstream out = open_out(output);

  int line_no = 0;
  int error_count = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!j.contains("response")) {
        throw std::runtime_error("missing field 'response'");
      }
      if (!j.contains("options")) {
        throw std::runtime_error("missing field 'options'");
      }
      if (!j.contains("gt_letter")) {
        throw std::runtime_error("missing field 'gt_letter'");
      }
      const std::string gt = j.at("gt_letter").get<std::string>();
      if (gt.size() != 1) {
        throw std::runtime_error("gt_letter must be a single letter");
      }
      const reward::ChoiceSet choices(
          j.at("options").get<std::vector<std::string>>(), gt[0]);
      const reward::RewardBreakdown breakdown =
          reward::total_reward(j.at("response").get<std::string>(), choices);
      json scored = j;
      scored["format_reward"] = breakdown.format_reward;
      scored["accuracy_reward"] = breakdown.accuracy_reward;
      scored["total"] = breakdown.total;
      scored["match_kind"] = std::string(reward::to_string(breakdown.match_kind));
      out << scored.dump() << '\n';
    } catch (const std::exception& e) {
      ++error_count;
      out << json{{"line", line_no}, {"error", e.what()}}.dump() << '\n';
      std::cerr << "line " << line_no << ": " << e.what() << '\n';
    }
  }
  return error_count == 0 ? 0 : 1;
}

int cmd_gradcheck(std::uint64_t seed, int trials, bool inject_fault) {
  if (trials == 0) {
    std::cerr << "warning: 0 trials requested; vacuous pass\n";
    std::cout << "gradcheck: 0 trials, max relative error n/a\n";
    return 0;
  }
  const check::GradCheckResult result =
      check::run_gradcheck(seed, trials, inject_fault);
  std::cout << "gradcheck: " << result.trials
            << " trials, max relative error " << result.max_rel_err << '\n';
  if (!result.passed()) {
    std::cerr << "gradcheck failed at parameter " << result.worst_param << " ("
              << result.worst_case << ")\n";
    return 1;
  }
  return 0;
}

int cmd_synth(const std::string& config_path,
              const std::filesystem::path& out_dir,
              std::optional<std::uint64_t> seed_override) {
  json j = json::object();
  if (!config_path.empty()) j = load_config(config_path);

  data::FamilySpec id_spec =
      j.contains("family") ? family_from_json(j.at("family"))
                           : data::default_family(false);
  id_spec.ood_shift = false;
  data::FamilySpec ood_spec = id_spec;
  ood_spec.ood_shift = true;

  const std::uint64_t seed = seed_override.value_or(j.value("seed", 11));
  const int train_count = j.value("train_count", 600);
  const int id_count = j.value("id_test_count", 300);
  const int ood_count = j.value("ood_test_count", 300);

  std::filesystem::create_directories(out_dir);
  // Test records' stream keys differ from training ones via the seed offset.
  const auto train_records =
      data::generate_synthetic_family(id_spec, train_count, seed);
  auto id_test = data::generate_synthetic_family(id_spec, id_count, seed + 1);
  for (auto& r : id_test) r.id = "test-" + r.id;
  auto ood_test = data::generate_synthetic_family(ood_spec, ood_count, seed + 2);
  for (auto& r : ood_test) r.id = "test-" + r.id;

  data::save_records_file(out_dir / "train.jsonl", train_records);
  data::save_records_file(out_dir / "id_test.jsonl", id_test);
  data::save_records_file(out_dir / "ood_test.jsonl", ood_test);
  std::cout << "wrote " << train_count << " train, " << id_count
            << " id_test, " << ood_count << " ood_test records to "
            << out_dir.string() << '\n';
  return 0;
}

}  // namespace grpolab::app

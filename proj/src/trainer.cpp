#include "grpolab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "grpolab/rng.hpp"

namespace grpolab::train {

namespace {

using nlohmann::json;

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(),
                     [](double x) { return std::isfinite(x); });
}

void apply_ascent(policy::Policy& live, std::span<const double> gradient,
                  double learning_rate) {
  std::vector<double> params = live.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] += learning_rate * gradient[i];
  }
  live.set_params(params);
}

[[noreturn]] void abort_with_dump(const std::string& reason,
                                  const grpo::RolloutGroup& group,
                                  const grpo::GroupTerms& terms) {
  throw TrainingAbort(reason + " (record " + group.record_id + ")",
                      trace_record(group, terms));
}

}  // namespace

std::string trace_record(const grpo::RolloutGroup& group,
                         const grpo::GroupTerms& terms) {
  json j;
  j["record_id"] = group.record_id;
  j["rewards"] = group.rewards;
  j["advantages"] = group.advantages;
  j["ratios"] = terms.ratios;
  j["surrogates"] = terms.surrogates;
  j["kls"] = terms.kls;
  j["objective"] = terms.objective;
  return j.dump();
}

std::string canonical_target(const data::VqaRecord& record) {
  return policy::ToyTemplatePolicy::render(
      record, policy::Outcome{policy::TemplateKind::WellFormed,
                              static_cast<int>(record.gt_letter - 'A'),
                              policy::AnswerStyle::LetterOnly});
}

TrainState train_grpo(std::span<const data::VqaRecord> records,
                      policy::Policy& live, const grpo::GrpoConfig& config,
                      const TraceFn& trace) {
  config.validate();
  if (records.empty()) {
    throw std::invalid_argument("train_grpo: record set is empty");
  }

  TrainState state;
  state.reference = live.snapshot();
  const std::size_t dim = live.params().size();

  for (int step = 0; step < config.steps; ++step) {
    if (step % config.old_refresh_every == 0) {
      state.old_snapshot = live.snapshot();
    }
    const policy::Policy& old_policy = *state.old_snapshot;
    const policy::Policy& ref_policy = *state.reference;

    std::vector<double> batch_gradient(dim, 0.0);
    double reward_sum = 0.0;
    double format_sum = 0.0;
    double exact_sum = 0.0;
    double kl_sum = 0.0;
    double objective_sum = 0.0;
    const int samples_per_step = config.batch_size * config.group_size;

    for (int slot = 0; slot < config.batch_size; ++slot) {
      const data::VqaRecord& record =
          records[(static_cast<std::size_t>(step) * config.batch_size + slot) %
                  records.size()];
      auto stream = rng::stream_for(config.seed, static_cast<std::uint64_t>(step),
                                    static_cast<std::uint64_t>(slot), record.id);
      const reward::ChoiceSet choices = record.choices();

      grpo::RolloutGroup group;
      group.record_id = record.id;
      std::vector<std::vector<double>> logp_grads;
      for (int i = 0; i < config.group_size; ++i) {
        auto [response, logp_old] = old_policy.sample(record, stream);
        const reward::RewardBreakdown breakdown =
            reward::total_reward(response, choices);
        reward_sum += breakdown.total;
        format_sum += breakdown.format_reward;
        exact_sum += breakdown.match_kind == reward::MatchKind::Exact ? 1.0 : 0.0;

        group.logp_new.push_back(live.logprob(record, response));
        group.logp_old.push_back(logp_old);
        group.logp_ref.push_back(ref_policy.logprob(record, response));
        group.rewards.push_back(breakdown.total);
        logp_grads.push_back(live.logprob_grad(record, response));
        group.responses.push_back(std::move(response));
      }
      group.advantages = grpo::group_advantages(group.rewards, config.std_floor);

      const grpo::GroupTerms terms = grpo::grpo_terms(group, config);
      if (!std::isfinite(terms.objective)) {
        abort_with_dump("train_grpo: non-finite objective", group, terms);
      }
      const std::vector<double> gradient =
          grpo::grpo_gradient(group, logp_grads, config);
      if (!all_finite(gradient)) {
        abort_with_dump("train_grpo: non-finite gradient", group, terms);
      }

      for (double kl : terms.kls) kl_sum += kl;
      objective_sum += terms.objective;
      for (std::size_t k = 0; k < dim; ++k) batch_gradient[k] += gradient[k];
      if (trace) trace(group, terms);
    }

    for (double& g : batch_gradient) g /= config.batch_size;
    apply_ascent(live, batch_gradient, config.learning_rate);

    GrpoStepMetrics metrics;
    metrics.step = step;
    metrics.mean_reward = reward_sum / samples_per_step;
    metrics.format_rate = format_sum / samples_per_step;
    metrics.exact_rate = exact_sum / samples_per_step;
    metrics.mean_kl = kl_sum / samples_per_step;
    metrics.objective = objective_sum / config.batch_size;
    state.grpo_metrics.push_back(metrics);
    ++state.steps_completed;
  }
  return state;
}

TrainState train_sft(std::span<const data::VqaRecord> records,
                     policy::Policy& live, const grpo::GrpoConfig& config) {
  config.validate();
  if (records.empty()) {
    throw std::invalid_argument("train_sft: record set is empty");
  }

  TrainState state;
  state.reference = live.snapshot();
  const std::size_t dim = live.params().size();

  for (int step = 0; step < config.steps; ++step) {
    std::vector<double> batch_gradient(dim, 0.0);  // of the mean log-likelihood
    double nll_sum = 0.0;
    for (int slot = 0; slot < config.batch_size; ++slot) {
      const data::VqaRecord& record =
          records[(static_cast<std::size_t>(step) * config.batch_size + slot) %
                  records.size()];
      const std::string target = canonical_target(record);
      const double logp = live.logprob(record, target);
      if (!std::isfinite(logp)) {
        throw TrainingAbort("train_sft: non-finite target log-likelihood "
                            "(record " + record.id + ")",
                            "{\"record_id\":\"" + record.id + "\"}");
      }
      nll_sum += -logp;
      const std::vector<double> grad = live.logprob_grad(record, target);
      for (std::size_t k = 0; k < dim; ++k) batch_gradient[k] += grad[k];
    }
    for (double& g : batch_gradient) g /= config.batch_size;
    if (!all_finite(batch_gradient)) {
      throw TrainingAbort("train_sft: non-finite gradient", "{}");
    }
    apply_ascent(live, batch_gradient, config.learning_rate);

    state.sft_metrics.push_back({step, nll_sum / config.batch_size});
    ++state.steps_completed;
  }
  return state;
}

std::string GeneralizationReport::render_table() const {
  std::vector<eval::EvalReport> reports;
  reports.reserve(methods.size());
  for (const auto& m : methods) reports.push_back(m.report);
  std::string out = eval::render_table(reports);
  for (const auto& w : warnings) {
    out += "warning: " + w + "\n";
  }
  return out;
}

GeneralizationReport generalization_experiment(
    std::span<const data::VqaRecord> train_split,
    std::span<const data::VqaRecord> id_test,
    std::span<const data::VqaRecord> ood_test, const grpo::GrpoConfig& config) {
  data::SplitSpec split;
  for (const auto& r : train_split) split.train.push_back(r.id);
  for (const auto& r : id_test) split.id_test.push_back(r.id);
  for (const auto& r : ood_test) split.ood_test.push_back(r.id);
  data::validate_split(split);
  if (train_split.empty()) {
    throw std::invalid_argument("generalization_experiment: empty train split");
  }

  // Both policies share the category vocabulary observed in training.
  std::vector<std::string> categories;
  for (const auto& r : train_split) {
    if (!r.category.empty() &&
        std::find(categories.begin(), categories.end(), r.category) ==
            categories.end()) {
      categories.push_back(r.category);
    }
  }

  std::vector<data::VqaRecord> test_records(id_test.begin(), id_test.end());
  test_records.insert(test_records.end(), ood_test.begin(), ood_test.end());

  GeneralizationReport report;
  if (ood_test.empty()) {
    report.warnings.push_back("OOD split absent; reporting ID columns only");
  }

  const auto run_method = [&](const std::string& method) {
    policy::ToyTemplatePolicy policy(categories);
    if (method == "grpo") {
      train_grpo(train_split, policy, config);
    } else {
      train_sft(train_split, policy, config);
    }
    eval::EvalReport r = eval::evaluate(policy, test_records,
                                        eval::Decoding::Greedy, config.seed,
                                        method);
    r.seen_samples = static_cast<long>(train_split.size());
    report.methods.push_back({method, std::move(r)});
  };
  run_method("grpo");
  run_method("sft");
  return report;
}

}  // namespace grpolab::train

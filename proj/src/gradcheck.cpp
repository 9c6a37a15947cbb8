#include "grpolab/gradcheck.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "grpolab/dataset.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/rng.hpp"

namespace grpolab::check {

namespace {

// Gradient components are O(0.01..1) here; the denominator floor only keeps
// finite-difference rounding noise on near-zero components from registering
// as a huge relative error.
constexpr double kDenomFloor = 1e-3;
constexpr double kFdStep = 1e-6;
constexpr double kKinkGuard = 1e-4;

double rel_err(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), kDenomFloor});
  return std::abs(analytic - numeric) / denom;
}

double gaussian(std::mt19937_64& rng) {
  // Box-Muller on the engine's own uniform; keeps streams platform-stable.
  const double u1 = std::max(rng::uniform01(rng), 1e-300);
  const double u2 = rng::uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void randomize(policy::ToyTemplatePolicy& policy, std::mt19937_64& rng,
               double scale) {
  std::vector<double> params = policy.params();
  for (double& p : params) p = scale * gaussian(rng);
  policy.set_params(params);
}

struct Trial {
  double max_rel_err = 0.0;
  int worst_param = -1;
  bool near_kink = false;
};

// Finite differences of logprob(response) over every parameter.
Trial check_logprob_grad(policy::ToyTemplatePolicy& policy,
                         const data::VqaRecord& record,
                         const std::string& response) {
  Trial trial;
  const std::vector<double> analytic = policy.logprob_grad(record, response);
  std::vector<double> params = policy.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + kFdStep;
    policy.set_params(params);
    const double hi = policy.logprob(record, response);
    params[k] = saved - kFdStep;
    policy.set_params(params);
    const double lo = policy.logprob(record, response);
    params[k] = saved;
    const double fd = (hi - lo) / (2.0 * kFdStep);
    const double err = rel_err(analytic[k], fd);
    if (err > trial.max_rel_err) {
      trial.max_rel_err = err;
      trial.worst_param = static_cast<int>(k);
    }
  }
  policy.set_params(params);
  return trial;
}

// Finite differences of the full objective through the live policy's
// log-probs, holding rewards, advantages, and the frozen snapshots fixed.
Trial check_grpo_grad(policy::ToyTemplatePolicy& live,
                      const policy::ToyTemplatePolicy& old_policy,
                      const policy::ToyTemplatePolicy& ref_policy,
                      const data::VqaRecord& record,
                      const grpo::GrpoConfig& config, std::mt19937_64& rng,
                      bool inject_fault) {
  Trial trial;
  const int group_size = config.group_size;

  grpo::RolloutGroup group;
  group.record_id = record.id;
  std::vector<std::vector<double>> logp_grads;
  static const double kRewardLevels[4] = {0.0, 1.0, 1.5, 2.0};
  for (int i = 0; i < group_size; ++i) {
    auto [response, logp_old] = old_policy.sample(record, rng);
    group.logp_old.push_back(logp_old);
    group.logp_new.push_back(live.logprob(record, response));
    group.logp_ref.push_back(ref_policy.logprob(record, response));
    group.rewards.push_back(kRewardLevels[rng() % 4]);
    logp_grads.push_back(live.logprob_grad(record, response));
    group.responses.push_back(std::move(response));
  }
  if (std::all_of(group.rewards.begin(), group.rewards.end(), [&](double r) {
        return r == group.rewards.front();
      })) {
    group.rewards[0] = group.rewards[0] == 2.0 ? 0.0 : 2.0;
  }
  group.advantages = grpo::group_advantages(group.rewards, config.std_floor);

  for (int i = 0; i < group_size; ++i) {
    const double ratio = grpo::prob_ratio(group.logp_new[i], group.logp_old[i]);
    if (std::abs(ratio - (1.0 - config.clip_eps)) < kKinkGuard ||
        std::abs(ratio - (1.0 + config.clip_eps)) < kKinkGuard) {
      trial.near_kink = true;
      return trial;
    }
  }

  std::vector<double> analytic = grpo::grpo_gradient(group, logp_grads, config);
  if (inject_fault) {
    analytic[0] = analytic[0] == 0.0 ? 1.0 : -analytic[0];
  }

  auto objective_at = [&](std::span<const double> params) {
    live.set_params(params);
    grpo::RolloutGroup g = group;
    for (int i = 0; i < group_size; ++i) {
      g.logp_new[i] = live.logprob(record, g.responses[i]);
    }
    return grpo::grpo_objective(g, config);
  };

  std::vector<double> params = live.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + kFdStep;
    const double hi = objective_at(params);
    params[k] = saved - kFdStep;
    const double lo = objective_at(params);
    params[k] = saved;
    const double fd = (hi - lo) / (2.0 * kFdStep);
    const double err = rel_err(analytic[k], fd);
    if (err > trial.max_rel_err) {
      trial.max_rel_err = err;
      trial.worst_param = static_cast<int>(k);
    }
  }
  live.set_params(params);
  return trial;
}

}  // namespace

GradCheckResult run_gradcheck(std::uint64_t seed, int trials,
                              bool inject_fault) {
  GradCheckResult result;
  if (trials <= 0) return result;

  static const double kEps[3] = {0.0, 0.1, 0.2};
  static const double kBeta[3] = {0.0, 0.04, 0.1};

  std::mt19937_64 rng = rng::stream_for(seed, 0, 0, "gradcheck");
  const std::vector<std::string> categories = {"k-alpha", "k-beta", "k-gamma",
                                               "k-delta"};
  const std::vector<data::VqaRecord> records =
      data::generate_synthetic_family(data::default_family(false), 8, seed);

  int completed = 0;
  int attempts = 0;
  while (completed < trials && attempts < trials * 20) {
    ++attempts;
    const data::VqaRecord& record = records[rng() % records.size()];

    policy::ToyTemplatePolicy live(categories);
    policy::ToyTemplatePolicy old_policy(categories);
    policy::ToyTemplatePolicy ref_policy(categories);
    randomize(live, rng, 1.0);
    randomize(old_policy, rng, 1.0);
    randomize(ref_policy, rng, 1.0);

    grpo::GrpoConfig config;
    config.group_size = 2 + static_cast<int>(rng() % 7);  // G in {2..8}
    config.clip_eps = kEps[completed % 3];
    config.kl_beta = kBeta[(completed / 3) % 3];

    auto [sampled, logp] = old_policy.sample(record, rng);
    (void)logp;
    Trial lp_trial = check_logprob_grad(live, record, sampled);
    Trial obj_trial = check_grpo_grad(live, old_policy, ref_policy, record,
                                      config, rng, inject_fault);
    if (obj_trial.near_kink) continue;

    for (const Trial& t : {lp_trial, obj_trial}) {
      if (t.max_rel_err > result.max_rel_err) {
        result.max_rel_err = t.max_rel_err;
        result.worst_param = t.worst_param;
        result.worst_case = "trial " + std::to_string(completed) +
                            " (eps=" + std::to_string(config.clip_eps) +
                            ", beta=" + std::to_string(config.kl_beta) +
                            ", G=" + std::to_string(config.group_size) + ")";
      }
    }
    ++completed;
  }
  result.trials = completed;
  return result;
}

}  // namespace grpolab::check

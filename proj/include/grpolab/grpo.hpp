#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace grpolab::grpo {

// Exponent guard applied before exp() in the ratio and KL kernels so that
// pathological log-probability gaps stay finite.
inline constexpr double kExpClamp = 30.0;

struct GrpoConfig {
  int group_size = 6;
  double clip_eps = 0.2;
  double kl_beta = 0.04;
  double std_floor = 1e-8;
  double learning_rate = 0.1;
  int steps = 500;
  int batch_size = 2;
  int old_refresh_every = 1;  // snapshot cadence for the sampling policy
  std::uint64_t seed = 0;

  // Throws std::invalid_argument on any violated bound.
  void validate() const;
};

// The G sampled responses for one record, with each response scored under the
// live, old (sampling-time), and reference policies.
struct RolloutGroup {
  std::string record_id;
  std::vector<std::string> responses;
  std::vector<double> logp_new;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  std::vector<double> rewards;
  std::vector<double> advantages;  // filled by group_advantages
};

// Per-sample terms of the objective, kept for tracing and diagnostics.
struct GroupTerms {
  std::vector<double> ratios;
  std::vector<double> surrogates;
  std::vector<double> kls;
  double objective = 0.0;
};

// A_i = (r_i - mean) / max(population_std, std_floor). A group whose rewards
// are all equal yields exactly zero advantages. Rejects groups smaller than 2.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor);

// exp(logp_new - logp_old), exponent clamped to +-kExpClamp.
double prob_ratio(double logp_new, double logp_old);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A).
double clipped_surrogate(double ratio, double advantage, double eps);

// Per-sample estimator of KL(pi_new || pi_ref): exp(d) - d - 1 with
// d = logp_ref - logp_new. Nonnegative, zero iff the log-probs agree.
double kl_penalty(double logp_new, double logp_ref);

// (1/G) sum_i [ clipped_surrogate(ratio_i, A_i, eps) - beta * kl_i ].
// This is the quantity to maximize. Group list lengths must agree.
double grpo_objective(const RolloutGroup& group, const GrpoConfig& config);
GroupTerms grpo_terms(const RolloutGroup& group, const GrpoConfig& config);

// Exact gradient of grpo_objective with respect to the policy parameters,
// with logp_old and logp_ref treated as constants (frozen snapshots).
// logp_new_grads[i] is d(logp_new_i)/d(theta). Samples for which the clipped
// branch is selected contribute no surrogate gradient through the ratio.
std::vector<double> grpo_gradient(
    const RolloutGroup& group,
    std::span<const std::vector<double>> logp_new_grads,
    const GrpoConfig& config);

}  // namespace grpolab::grpo

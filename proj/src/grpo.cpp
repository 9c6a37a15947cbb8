#include "grpolab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace grpolab::grpo {

namespace {

void check_group_shape(const RolloutGroup& group) {
  const std::size_t n = group.rewards.size();
  if (n < 2) {
    throw std::invalid_argument("RolloutGroup: fewer than 2 samples");
  }
  if (group.logp_new.size() != n || group.logp_old.size() != n ||
      group.logp_ref.size() != n || group.advantages.size() != n) {
    throw std::invalid_argument("RolloutGroup: list lengths disagree");
  }
}

}  // namespace

void GrpoConfig::validate() const {
  if (group_size < 2) {
    throw std::invalid_argument("GrpoConfig: group_size must be >= 2");
  }
  if (clip_eps < 0.0 || clip_eps >= 1.0) {
    throw std::invalid_argument("GrpoConfig: clip_eps must be in [0, 1)");
  }
  if (kl_beta < 0.0) {
    throw std::invalid_argument("GrpoConfig: kl_beta must be >= 0");
  }
  if (!(std_floor > 0.0)) {
    throw std::invalid_argument("GrpoConfig: std_floor must be > 0");
  }
  if (!(learning_rate >= 0.0)) {
    throw std::invalid_argument("GrpoConfig: learning_rate must be >= 0");
  }
  if (steps < 1) {
    throw std::invalid_argument("GrpoConfig: steps must be >= 1");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("GrpoConfig: batch_size must be >= 1");
  }
  if (old_refresh_every < 1) {
    throw std::invalid_argument("GrpoConfig: old_refresh_every must be >= 1");
  }
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor) {
  if (rewards.size() < 2) {
    throw std::invalid_argument("group_advantages: group size must be >= 2");
  }
  if (!(std_floor > 0.0)) {
    throw std::invalid_argument("group_advantages: std_floor must be > 0");
  }

  const bool all_equal =
      std::all_of(rewards.begin(), rewards.end(),
                  [&](double r) { return r == rewards.front(); });
  if (all_equal) {
    return std::vector<double>(rewards.size(), 0.0);
  }

  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;

  double variance = 0.0;
  for (double r : rewards) variance += (r - mean) * (r - mean);
  variance /= n;  // population statistics, well-defined at G = 2

  const double denom = std::max(std::sqrt(variance), std_floor);
  std::vector<double> advantages(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    advantages[i] = (rewards[i] - mean) / denom;
  }
  return advantages;
}

double prob_ratio(double logp_new, double logp_old) {
  return std::exp(std::clamp(logp_new - logp_old, -kExpClamp, kExpClamp));
}

double clipped_surrogate(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_penalty(double logp_new, double logp_ref) {
  const double d = std::clamp(logp_ref - logp_new, -kExpClamp, kExpClamp);
  // expm1 keeps the small-d regime accurate; the max guards the last-ulp case.
  return std::max(0.0, std::expm1(d) - d);
}

GroupTerms grpo_terms(const RolloutGroup& group, const GrpoConfig& config) {
  check_group_shape(group);
  const std::size_t n = group.rewards.size();
  GroupTerms terms;
  terms.ratios.resize(n);
  terms.surrogates.resize(n);
  terms.kls.resize(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    terms.ratios[i] = prob_ratio(group.logp_new[i], group.logp_old[i]);
    terms.surrogates[i] =
        clipped_surrogate(terms.ratios[i], group.advantages[i], config.clip_eps);
    terms.kls[i] = kl_penalty(group.logp_new[i], group.logp_ref[i]);
    sum += terms.surrogates[i] - config.kl_beta * terms.kls[i];
  }
  terms.objective = sum / static_cast<double>(n);
  return terms;
}

double grpo_objective(const RolloutGroup& group, const GrpoConfig& config) {
  return grpo_terms(group, config).objective;
}

std::vector<double> grpo_gradient(
    const RolloutGroup& group,
    std::span<const std::vector<double>> logp_new_grads,
    const GrpoConfig& config) {
  check_group_shape(group);
  const std::size_t n = group.rewards.size();
  if (logp_new_grads.size() != n) {
    throw std::invalid_argument("grpo_gradient: need one log-prob gradient per sample");
  }
  const std::size_t dim = logp_new_grads.empty() ? 0 : logp_new_grads[0].size();
  for (const auto& g : logp_new_grads) {
    if (g.size() != dim) {
      throw std::invalid_argument(
          "grpo_gradient: gradient buffers disagree on parameter dimension");
    }
  }

  std::vector<double> out(dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double advantage = group.advantages[i];
    const double log_ratio = group.logp_new[i] - group.logp_old[i];
    const bool ratio_saturated = std::abs(log_ratio) > kExpClamp;
    const double ratio =
        std::exp(std::clamp(log_ratio, -kExpClamp, kExpClamp));
    const double clipped = std::clamp(ratio, 1.0 - config.clip_eps,
                                      1.0 + config.clip_eps);

    // min() picks the unclipped branch on ties, matching clipped_surrogate;
    // a selected clipped branch is flat in theta.
    double surrogate_coef = 0.0;
    if (ratio * advantage <= clipped * advantage && !ratio_saturated) {
      surrogate_coef = advantage * ratio;
    }

    const double d = group.logp_ref[i] - group.logp_new[i];
    const bool kl_saturated = std::abs(d) > kExpClamp;
    const double kl_coef =
        kl_saturated ? 0.0 : (1.0 - std::exp(std::clamp(d, -kExpClamp, kExpClamp)));

    const double coef =
        (surrogate_coef - config.kl_beta * kl_coef) / static_cast<double>(n);
    const auto& g = logp_new_grads[i];
    for (std::size_t k = 0; k < dim; ++k) {
      out[k] += coef * g[k];
    }
  }
  return out;
}

}  // namespace grpolab::grpo

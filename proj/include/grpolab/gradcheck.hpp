#pragma once

#include <cstdint>
#include <string>

namespace grpolab::check {

struct GradCheckResult {
  int trials = 0;
  double max_rel_err = 0.0;
  int worst_param = -1;
  std::string worst_case;
  bool passed(double tolerance = 1e-5) const {
    return max_rel_err <= tolerance;
  }
};

// Randomized central-finite-difference validation of the policy log-prob
// gradient and of the full objective gradient: random logits, random reward
// groups, clip widths {0, 0.1, 0.2} and KL weights {0, 0.04, 0.1} cycled per
// trial, step 1e-6. Trials landing within 1e-4 of a clip boundary are
// redrawn, since central differences straddle the kink there. inject_fault
// flips one analytic component to prove the checker detects a bad gradient.
GradCheckResult run_gradcheck(std::uint64_t seed, int trials,
                              bool inject_fault = false);

}  // namespace grpolab::check

#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grpolab/dataset.hpp"
#include "grpolab/eval.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/policy.hpp"

namespace grpolab::train {

struct GrpoStepMetrics {
  int step = 0;
  double mean_reward = 0.0;
  double format_rate = 0.0;
  double exact_rate = 0.0;
  double mean_kl = 0.0;
  double objective = 0.0;
};

struct SftStepMetrics {
  int step = 0;
  double loss = 0.0;
};

struct TrainState {
  int steps_completed = 0;
  std::unique_ptr<policy::Policy> reference;     // frozen at initialization
  std::unique_ptr<policy::Policy> old_snapshot;  // last sampling snapshot
  std::vector<GrpoStepMetrics> grpo_metrics;
  std::vector<SftStepMetrics> sft_metrics;
};

// Raised when a step produces a non-finite objective or gradient; carries a
// serialized dump of the offending group.
class TrainingAbort : public std::runtime_error {
 public:
  TrainingAbort(const std::string& message, std::string group_dump)
      : std::runtime_error(message), group_dump_(std::move(group_dump)) {}
  const std::string& group_dump() const { return group_dump_; }

 private:
  std::string group_dump_;
};

// Per-group trace hook; receives the sampled group and its objective terms.
using TraceFn =
    std::function<void(const grpo::RolloutGroup&, const grpo::GroupTerms&)>;

// Serialized trace record for one group (newline-delimited when streamed).
std::string trace_record(const grpo::RolloutGroup& group,
                         const grpo::GroupTerms& terms);

// The canonical supervised target for a record: well-formed template,
// ground-truth letter, letter-only style.
std::string canonical_target(const data::VqaRecord& record);

// Group-relative policy optimization over the record set. Each step snapshots
// the sampling policy (every old_refresh_every steps), draws group_size
// responses per record for a batch of batch_size records, scores them with
// the rule-based reward, and applies one gradient-ascent step on the clipped
// group-relative objective. Deterministic for a fixed seed.
TrainState train_grpo(std::span<const data::VqaRecord> records,
                      policy::Policy& live, const grpo::GrpoConfig& config,
                      const TraceFn& trace = nullptr);

// Gradient descent on the mean negative log-likelihood of the canonical
// targets, with the same batching and seeding scheme.
TrainState train_sft(std::span<const data::VqaRecord> records,
                     policy::Policy& live, const grpo::GrpoConfig& config);

struct MethodOutcome {
  std::string method;
  eval::EvalReport report;  // covers both ID and OOD modalities when present
};

struct GeneralizationReport {
  std::vector<MethodOutcome> methods;
  std::vector<std::string> warnings;
  std::string render_table() const;
};

// Trains one GRPO policy and one SFT policy on the training split with
// identical budgets and reports strict-eval accuracy on the ID and OOD test
// splits. Rejects record ids shared across splits. An empty OOD split is
// reported as absent, not an error.
GeneralizationReport generalization_experiment(
    std::span<const data::VqaRecord> train_split,
    std::span<const data::VqaRecord> id_test,
    std::span<const data::VqaRecord> ood_test, const grpo::GrpoConfig& config);

}  // namespace grpolab::train

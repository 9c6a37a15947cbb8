#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "grpolab/dataset.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/reward.hpp"

namespace grpolab::eval {

enum class Decoding { Greedy, Sampled };

struct RecordVerdict {
  std::string id;
  std::string extracted_answer;  // answer-tag content, when recoverable
  int verdict = 0;               // 1 = scored correct under the strict rule
};

struct ModalityStats {
  std::string modality;
  int n = 0;
  int correct = 0;
  double accuracy_pct() const {
    return n == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / n;
  }
};

struct EvalReport {
  std::string method_label;
  std::optional<long> seen_samples;  // training-set size; absent for zero-shot
  std::vector<ModalityStats> per_modality;  // first-appearance order
  std::vector<RecordVerdict> verdicts;
  std::vector<std::string> warnings;

  // Unweighted mean of the per-modality accuracies (modalities with n > 0).
  double average_pct() const;
};

// 1 iff the response is well formed and the trimmed answer content is exactly
// the ground-truth letter (single character; case-insensitive unless
// case_sensitive). Everything else scores 0, including partial matches that
// earn 0.5 training reward.
int score_strict(std::string_view response, const reward::ChoiceSet& choices,
                 bool case_sensitive = false);

// One response per record (greedy by default; Sampled derives a per-record
// stream from the seed) scored under score_strict, aggregated per modality.
EvalReport evaluate(const policy::Policy& policy,
                    std::span<const data::VqaRecord> records,
                    Decoding decoding = Decoding::Greedy,
                    std::uint64_t seed = 0, std::string method_label = {},
                    bool case_sensitive = false);

// Aligned text table: method, seen-sample count, one accuracy column per
// modality, Average. Multi-report overload shares the column set.
std::string render_table(std::span<const EvalReport> reports);
std::string render_table(const EvalReport& report);

// Machine-readable form of the report (JSON, serialized).
std::string report_json_string(const EvalReport& report);

}  // namespace grpolab::eval

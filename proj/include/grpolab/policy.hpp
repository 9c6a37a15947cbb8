#pragma once

#include <filesystem>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "grpolab/dataset.hpp"

namespace grpolab::policy {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Stochastic-policy contract: sample tagged responses, score arbitrary
// strings, differentiate the log-probability, and freeze snapshots usable as
// the old or reference policy.
class Policy {
 public:
  virtual ~Policy() = default;

  // Returns (response, log-probability). The same response scored through
  // logprob() yields the identical value.
  virtual std::pair<std::string, double> sample(const data::VqaRecord& record,
                                                std::mt19937_64& rng) const = 0;

  // Most-probable outcome; deterministic (ties break to the lowest index).
  virtual std::pair<std::string, double> greedy(
      const data::VqaRecord& record) const = 0;

  // Log-probability of response under this policy, or -infinity when the
  // string is outside the renderable support (a value, not an error).
  virtual double logprob(const data::VqaRecord& record,
                         std::string_view response) const = 0;

  // d logprob / d theta. Throws std::invalid_argument for out-of-support
  // responses.
  virtual std::vector<double> logprob_grad(const data::VqaRecord& record,
                                           std::string_view response) const = 0;

  virtual std::vector<double> params() const = 0;
  virtual void set_params(std::span<const double> params) = 0;

  // Frozen copy, unaffected by later updates to this policy.
  virtual std::unique_ptr<Policy> snapshot() const = 0;
};

enum class TemplateKind {
  WellFormed = 0,
  MissingThinkClose = 1,
  ContentOutsideTags = 2,
  DuplicatedAnswerTag = 3,
};

enum class AnswerStyle {
  LetterOnly = 0,
  LetterPlusExplanation = 1,
  OptionTextOnly = 2,
};

inline constexpr int kNumTemplates = 4;
inline constexpr int kNumStyles = 3;
inline constexpr int kMaxLetters = 6;

struct Outcome {
  TemplateKind tmpl = TemplateKind::WellFormed;
  int letter = 0;  // option index
  AnswerStyle style = AnswerStyle::LetterOnly;

  bool operator==(const Outcome&) const = default;
};

// Analytic stand-in for a generative model: three factorized categorical
// heads (response skeleton, option letter, answer style) whose logits are
// bias + W * phi(record). phi one-hots the record's category over a fixed
// vocabulary; an empty vocabulary gives the context-free mode. The letter
// head is masked to the record's option count, and the response string is a
// deterministic function of the outcome, so every quantity has a brute-force
// oracle over the enumerable support (at most 4 x 6 x 3 outcomes).
class ToyTemplatePolicy : public Policy {
 public:
  explicit ToyTemplatePolicy(std::vector<std::string> categories = {});

  static std::string render(const data::VqaRecord& record, Outcome outcome);
  static std::vector<std::pair<Outcome, std::string>> enumerate_support(
      const data::VqaRecord& record);

  // Outcome-level fast path (no string matching); used where the string
  // contract is not under test.
  std::pair<Outcome, double> sample_outcome(const data::VqaRecord& record,
                                            std::mt19937_64& rng) const;
  double outcome_logprob(const data::VqaRecord& record, Outcome outcome) const;
  Outcome greedy_outcome(const data::VqaRecord& record) const;

  std::pair<std::string, double> sample(const data::VqaRecord& record,
                                        std::mt19937_64& rng) const override;
  std::pair<std::string, double> greedy(
      const data::VqaRecord& record) const override;
  double logprob(const data::VqaRecord& record,
                 std::string_view response) const override;
  std::vector<double> logprob_grad(const data::VqaRecord& record,
                                   std::string_view response) const override;
  std::vector<double> params() const override;
  void set_params(std::span<const double> params) override;
  std::unique_ptr<Policy> snapshot() const override;

  std::size_t param_count() const;
  int feature_dim() const { return static_cast<int>(categories_.size()); }
  const std::vector<std::string>& categories() const { return categories_; }

  // Pins one head to a single outcome (bias +-50); the other heads are
  // untouched. Used to build forced-format or uniform-letter baselines.
  void force_template(TemplateKind tmpl);
  void force_style(AnswerStyle style);

 private:
  friend void save_policy(const ToyTemplatePolicy&,
                          const std::filesystem::path&);
  friend ToyTemplatePolicy load_policy(const std::filesystem::path&);

  // Per-head logits for a record: bias + W * phi.
  std::vector<double> head_logits(int head, const data::VqaRecord& record) const;
  int feature_index(const data::VqaRecord& record) const;  // -1 when absent
  std::vector<double> masked_log_softmax(int head,
                                         const data::VqaRecord& record,
                                         int support) const;
  void accumulate_score_grad(std::span<double> grad, int head, int support,
                             int choice, const data::VqaRecord& record,
                             double weight) const;

  static constexpr int kHeadSizes[3] = {kNumTemplates, kMaxLetters, kNumStyles};
  std::vector<std::string> categories_;
  std::vector<double> bias_[3];
  std::vector<double> weight_[3];  // row-major [head_size x feature_dim]
};

// Checkpoint format: JSON object of named real arrays; round-trips losslessly.
void save_policy(const ToyTemplatePolicy& policy,
                 const std::filesystem::path& path);
ToyTemplatePolicy load_policy(const std::filesystem::path& path);

// Exact KL(p || q) over the enumerated outcome distribution for one record.
// Exposed to cross-check the sampled per-response estimator.
double exact_categorical_kl(const ToyTemplatePolicy& p,
                            const ToyTemplatePolicy& q,
                            const data::VqaRecord& record);

}  // namespace grpolab::policy

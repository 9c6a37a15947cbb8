#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace grpolab::reward {

// One multiple-choice answer set. Letters are positional ('A' + index) and
// never stored, so letter and text cannot drift apart.
class ChoiceSet {
 public:
  static constexpr std::size_t kMinOptions = 2;
  static constexpr std::size_t kMaxOptions = 6;

  // Throws std::invalid_argument if the option count is outside [2, 6] or
  // gt_letter does not name one of the options.
  ChoiceSet(std::vector<std::string> options, char gt_letter);

  const std::vector<std::string>& options() const { return options_; }
  std::size_t size() const { return options_.size(); }
  char letter_at(std::size_t index) const {
    return static_cast<char>('A' + index);
  }
  char gt_letter() const { return static_cast<char>('A' + gt_index_); }
  std::size_t gt_index() const { return gt_index_; }
  const std::string& gt_text() const { return options_[gt_index_]; }

 private:
  std::vector<std::string> options_;
  std::size_t gt_index_;
};

// Structural facts about one model output. Malformed input is a data state,
// not an error: every string parses to one of these.
struct ParsedResponse {
  std::optional<std::string> think_content;
  std::optional<std::string> answer_content;
  int think_open_count = 0;
  int think_close_count = 0;
  int answer_open_count = 0;
  int answer_close_count = 0;
  bool outside_content_present = false;
  bool well_formed = false;
};

enum class MatchKind { Exact, Partial, None };

std::string_view to_string(MatchKind kind);

struct RewardBreakdown {
  double format_reward = 0.0;
  double accuracy_reward = 0.0;
  double total = 0.0;
  MatchKind match_kind = MatchKind::None;
};

// Counts literal occurrences of <think>, </think>, <answer>, </answer> and
// decides well-formedness: each tag exactly once, open before close, the two
// spans disjoint, and no non-whitespace content outside them. Whitespace
// between or around the blocks is tolerated. Tag matching is byte-literal;
// spacing variants such as "< think >" are not tags.
ParsedResponse parse_tagged_response(std::string_view text);

// 1.0 iff well formed, else 0.0.
double format_reward(const ParsedResponse& parsed);

// Tiered answer scoring against the ground-truth choice:
//   exact   (1.0) trimmed content is the ground-truth letter, case-insensitive,
//                 optionally followed by a single period;
//   partial (0.5) the letter followed by a delimiter and further text, or the
//                 ground-truth option text itself;
//   none    (0.0) anything else.
// Requires a well-formed parse; the caller gates on format_reward first.
// Throws std::invalid_argument when the precondition is violated.
std::pair<double, MatchKind> accuracy_reward(const ParsedResponse& parsed,
                                             const ChoiceSet& choices);

// parse -> format -> (format-gated) accuracy. Total is their sum, one of
// {0, 1, 1.5, 2}.
RewardBreakdown total_reward(std::string_view text, const ChoiceSet& choices);

}  // namespace grpolab::reward

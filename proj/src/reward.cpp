#include "grpolab/reward.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <stdexcept>

namespace grpolab::reward {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

std::vector<std::size_t> find_all(std::string_view text, std::string_view marker) {
  std::vector<std::size_t> hits;
  std::size_t pos = text.find(marker);
  while (pos != std::string_view::npos) {
    hits.push_back(pos);
    pos = text.find(marker, pos + marker.size());
  }
  return hits;
}

bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

char lower(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(),
                    [](char x, char y) { return lower(x) == lower(y); });
}

// Trim plus collapse of internal whitespace runs to a single space.
std::string collapse_whitespace(std::string_view s) {
  s = trim(s);
  std::string out;
  out.reserve(s.size());
  bool in_run = false;
  for (char c : s) {
    if (is_space(c)) {
      in_run = true;
      continue;
    }
    if (in_run && !out.empty()) out.push_back(' ');
    in_run = false;
    out.push_back(c);
  }
  return out;
}

// Delimiters that may separate the answer letter from trailing explanation.
bool is_letter_delimiter(char c) {
  switch (c) {
    case ',':
    case ':':
    case ';':
    case '.':
    case ')':
    case '-':
      return true;
    default:
      return is_space(c);
  }
}

struct Span {
  std::size_t begin = 0;  // first byte of the opening tag
  std::size_t end = 0;    // one past the last byte of the closing tag
};

}  // namespace

ChoiceSet::ChoiceSet(std::vector<std::string> options, char gt_letter)
    : options_(std::move(options)) {
  if (options_.size() < kMinOptions || options_.size() > kMaxOptions) {
    throw std::invalid_argument("ChoiceSet: option count " +
                                std::to_string(options_.size()) +
                                " outside [2, 6]");
  }
  if (gt_letter < 'A' ||
      gt_letter >= static_cast<char>('A' + options_.size())) {
    throw std::invalid_argument(std::string("ChoiceSet: ground-truth letter '") +
                                gt_letter + "' not among the options");
  }
  gt_index_ = static_cast<std::size_t>(gt_letter - 'A');
}

std::string_view to_string(MatchKind kind) {
  switch (kind) {
    case MatchKind::Exact:
      return "exact";
    case MatchKind::Partial:
      return "partial";
    case MatchKind::None:
      return "none";
  }
  return "none";
}

ParsedResponse parse_tagged_response(std::string_view text) {
  ParsedResponse p;

  const auto think_opens = find_all(text, kThinkOpen);
  const auto think_closes = find_all(text, kThinkClose);
  const auto answer_opens = find_all(text, kAnswerOpen);
  const auto answer_closes = find_all(text, kAnswerClose);

  p.think_open_count = static_cast<int>(think_opens.size());
  p.think_close_count = static_cast<int>(think_closes.size());
  p.answer_open_count = static_cast<int>(answer_opens.size());
  p.answer_close_count = static_cast<int>(answer_closes.size());

  // A span is recoverable only when its pair of tags occurs exactly once and
  // in order. Content is extracted per pair even if the other pair is broken.
  std::optional<Span> think_span;
  if (p.think_open_count == 1 && p.think_close_count == 1 &&
      think_opens[0] < think_closes[0]) {
    think_span = Span{think_opens[0], think_closes[0] + kThinkClose.size()};
    const std::size_t content_begin = think_opens[0] + kThinkOpen.size();
    p.think_content =
        std::string(text.substr(content_begin, think_closes[0] - content_begin));
  }
  std::optional<Span> answer_span;
  if (p.answer_open_count == 1 && p.answer_close_count == 1 &&
      answer_opens[0] < answer_closes[0]) {
    answer_span = Span{answer_opens[0], answer_closes[0] + kAnswerClose.size()};
    const std::size_t content_begin = answer_opens[0] + kAnswerOpen.size();
    p.answer_content = std::string(
        text.substr(content_begin, answer_closes[0] - content_begin));
  }

  auto covered = [&](std::size_t i) {
    return (think_span && i >= think_span->begin && i < think_span->end) ||
           (answer_span && i >= answer_span->begin && i < answer_span->end);
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!is_space(text[i]) && !covered(i)) {
      p.outside_content_present = true;
      break;
    }
  }

  const bool counts_ok = p.think_open_count == 1 && p.think_close_count == 1 &&
                         p.answer_open_count == 1 && p.answer_close_count == 1;
  const bool disjoint =
      think_span && answer_span &&
      (think_span->end <= answer_span->begin ||
       answer_span->end <= think_span->begin);
  p.well_formed = counts_ok && disjoint && !p.outside_content_present;
  return p;
}

double format_reward(const ParsedResponse& parsed) {
  return parsed.well_formed ? 1.0 : 0.0;
}

std::pair<double, MatchKind> accuracy_reward(const ParsedResponse& parsed,
                                             const ChoiceSet& choices) {
  if (!parsed.well_formed) {
    throw std::invalid_argument(
        "accuracy_reward: response is not well formed; gate on format_reward");
  }
  const std::string_view answer = trim(*parsed.answer_content);
  const char gt = choices.gt_letter();

  if (!answer.empty() && lower(answer[0]) == lower(gt)) {
    if (answer.size() == 1) return {1.0, MatchKind::Exact};
    if (answer.size() == 2 && answer[1] == '.') return {1.0, MatchKind::Exact};
    // Letter, delimiter, then some actual explanation.
    if (is_letter_delimiter(answer[1]) && !trim(answer.substr(2)).empty()) {
      return {0.5, MatchKind::Partial};
    }
  }
  if (iequals(collapse_whitespace(answer), collapse_whitespace(choices.gt_text()))) {
    return {0.5, MatchKind::Partial};
  }
  return {0.0, MatchKind::None};
}

RewardBreakdown total_reward(std::string_view text, const ChoiceSet& choices) {
  RewardBreakdown breakdown;
  const ParsedResponse parsed = parse_tagged_response(text);
  breakdown.format_reward = format_reward(parsed);
  if (breakdown.format_reward == 1.0) {
    auto [accuracy, kind] = accuracy_reward(parsed, choices);
    breakdown.accuracy_reward = accuracy;
    breakdown.match_kind = kind;
  }
  breakdown.total = breakdown.format_reward + breakdown.accuracy_reward;
  return breakdown;
}

}  // namespace grpolab::reward

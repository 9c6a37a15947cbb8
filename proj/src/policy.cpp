#include "grpolab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "grpolab/rng.hpp"

namespace grpolab::policy {

namespace {

using nlohmann::json;

constexpr double kForceLogit = 50.0;

constexpr std::string_view kThinkFiller =
    "Reviewing the image and weighing each option.";
constexpr std::string_view kExplanationTail = ", based on the overall appearance.";
constexpr std::string_view kOutsideNote = "Note: final answer follows.";

std::string render_payload(const data::VqaRecord& record, int letter,
                           AnswerStyle style) {
  const char letter_char = static_cast<char>('A' + letter);
  switch (style) {
    case AnswerStyle::LetterOnly:
      return std::string(1, letter_char);
    case AnswerStyle::LetterPlusExplanation:
      return std::string(1, letter_char) + std::string(kExplanationTail);
    case AnswerStyle::OptionTextOnly:
      return record.options[static_cast<std::size_t>(letter)];
  }
  return {};
}

double logsumexp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - m);
  return m + std::log(sum);
}

}  // namespace

ToyTemplatePolicy::ToyTemplatePolicy(std::vector<std::string> categories)
    : categories_(std::move(categories)) {
  const int f = feature_dim();
  for (int h = 0; h < 3; ++h) {
    bias_[h].assign(static_cast<std::size_t>(kHeadSizes[h]), 0.0);
    weight_[h].assign(static_cast<std::size_t>(kHeadSizes[h] * f), 0.0);
  }
}

std::string ToyTemplatePolicy::render(const data::VqaRecord& record,
                                      Outcome outcome) {
  const std::string payload =
      render_payload(record, outcome.letter, outcome.style);
  std::string out;
  switch (outcome.tmpl) {
    case TemplateKind::WellFormed:
      out = "<think>";
      out += kThinkFiller;
      out += "</think>\n<answer>";
      out += payload;
      out += "</answer>";
      break;
    case TemplateKind::MissingThinkClose:
      out = "<think>";
      out += kThinkFiller;
      out += "\n<answer>";
      out += payload;
      out += "</answer>";
      break;
    case TemplateKind::ContentOutsideTags:
      out = "<think>";
      out += kThinkFiller;
      out += "</think>\n";
      out += kOutsideNote;
      out += "\n<answer>";
      out += payload;
      out += "</answer>";
      break;
    case TemplateKind::DuplicatedAnswerTag:
      out = "<think>";
      out += kThinkFiller;
      out += "</think>\n<answer>";
      out += payload;
      out += "</answer>\n<answer>";
      out += payload;
      out += "</answer>";
      break;
  }
  return out;
}

std::vector<std::pair<Outcome, std::string>> ToyTemplatePolicy::enumerate_support(
    const data::VqaRecord& record) {
  std::vector<std::pair<Outcome, std::string>> support;
  const int letters = static_cast<int>(record.options.size());
  support.reserve(static_cast<std::size_t>(kNumTemplates * letters * kNumStyles));
  for (int t = 0; t < kNumTemplates; ++t) {
    for (int l = 0; l < letters; ++l) {
      for (int s = 0; s < kNumStyles; ++s) {
        Outcome outcome{static_cast<TemplateKind>(t), l,
                        static_cast<AnswerStyle>(s)};
        support.emplace_back(outcome, render(record, outcome));
      }
    }
  }
  return support;
}

int ToyTemplatePolicy::feature_index(const data::VqaRecord& record) const {
  if (record.category.empty()) return -1;
  const auto it =
      std::find(categories_.begin(), categories_.end(), record.category);
  return it == categories_.end()
             ? -1
             : static_cast<int>(it - categories_.begin());
}

std::vector<double> ToyTemplatePolicy::head_logits(
    int head, const data::VqaRecord& record) const {
  std::vector<double> logits = bias_[head];
  const int f = feature_index(record);
  if (f >= 0) {
    const int dim = feature_dim();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits[i] += weight_[head][i * static_cast<std::size_t>(dim) +
                                static_cast<std::size_t>(f)];
    }
  }
  return logits;
}

std::vector<double> ToyTemplatePolicy::masked_log_softmax(
    int head, const data::VqaRecord& record, int support) const {
  const std::vector<double> logits = head_logits(head, record);
  std::vector<double> out(static_cast<std::size_t>(support));
  double m = kNegInf;
  for (int i = 0; i < support; ++i) m = std::max(m, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < support; ++i) sum += std::exp(logits[i] - m);
  const double log_z = m + std::log(sum);
  for (int i = 0; i < support; ++i) out[i] = logits[i] - log_z;
  return out;
}

std::pair<Outcome, double> ToyTemplatePolicy::sample_outcome(
    const data::VqaRecord& record, std::mt19937_64& rng) const {
  const int letters = static_cast<int>(record.options.size());
  const int supports[3] = {kNumTemplates, letters, kNumStyles};
  int picks[3];
  double logp = 0.0;
  for (int h = 0; h < 3; ++h) {
    const std::vector<double> logps = masked_log_softmax(h, record, supports[h]);
    std::vector<double> probs(logps.size());
    for (std::size_t i = 0; i < logps.size(); ++i) probs[i] = std::exp(logps[i]);
    const int pick = rng::categorical(probs, rng::uniform01(rng));
    picks[h] = pick;
    logp += logps[static_cast<std::size_t>(pick)];
  }
  return {Outcome{static_cast<TemplateKind>(picks[0]), picks[1],
                  static_cast<AnswerStyle>(picks[2])},
          logp};
}

double ToyTemplatePolicy::outcome_logprob(const data::VqaRecord& record,
                                          Outcome outcome) const {
  const int letters = static_cast<int>(record.options.size());
  if (outcome.letter < 0 || outcome.letter >= letters) return kNegInf;
  const auto t = masked_log_softmax(0, record, kNumTemplates);
  const auto l = masked_log_softmax(1, record, letters);
  const auto s = masked_log_softmax(2, record, kNumStyles);
  return t[static_cast<std::size_t>(outcome.tmpl)] +
         l[static_cast<std::size_t>(outcome.letter)] +
         s[static_cast<std::size_t>(outcome.style)];
}

Outcome ToyTemplatePolicy::greedy_outcome(const data::VqaRecord& record) const {
  const int letters = static_cast<int>(record.options.size());
  const int supports[3] = {kNumTemplates, letters, kNumStyles};
  int picks[3];
  for (int h = 0; h < 3; ++h) {
    const std::vector<double> logits = head_logits(h, record);
    int best = 0;
    for (int i = 1; i < supports[h]; ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    picks[h] = best;
  }
  return Outcome{static_cast<TemplateKind>(picks[0]), picks[1],
                 static_cast<AnswerStyle>(picks[2])};
}

std::pair<std::string, double> ToyTemplatePolicy::sample(
    const data::VqaRecord& record, std::mt19937_64& rng) const {
  const auto [outcome, logp] = sample_outcome(record, rng);
  return {render(record, outcome), logp};
}

std::pair<std::string, double> ToyTemplatePolicy::greedy(
    const data::VqaRecord& record) const {
  const Outcome outcome = greedy_outcome(record);
  return {render(record, outcome), outcome_logprob(record, outcome)};
}

double ToyTemplatePolicy::logprob(const data::VqaRecord& record,
                                  std::string_view response) const {
  // Distinct outcomes normally render distinct strings; summing over matches
  // keeps the probability well defined even for aliased option texts.
  std::vector<double> matches;
  for (const auto& [outcome, rendered] : enumerate_support(record)) {
    if (rendered == response) {
      matches.push_back(outcome_logprob(record, outcome));
    }
  }
  if (matches.empty()) return kNegInf;
  if (matches.size() == 1) return matches[0];
  return logsumexp(matches);
}

void ToyTemplatePolicy::accumulate_score_grad(std::span<double> grad, int head,
                                              int support, int choice,
                                              const data::VqaRecord& record,
                                              double weight) const {
  // one-hot(choice) - softmax(logits), routed through bias and, when the
  // record carries a known category, the matching weight column.
  const std::vector<double> logps = masked_log_softmax(head, record, support);
  std::size_t bias_offset = 0;
  for (int h = 0; h < head; ++h) {
    bias_offset += static_cast<std::size_t>(kHeadSizes[h]);
  }
  const int dim = feature_dim();
  std::size_t weight_offset =
      static_cast<std::size_t>(kNumTemplates + kMaxLetters + kNumStyles);
  for (int h = 0; h < head; ++h) {
    weight_offset += static_cast<std::size_t>(kHeadSizes[h] * dim);
  }
  const int f = feature_index(record);
  for (int i = 0; i < support; ++i) {
    const double score =
        ((i == choice) ? 1.0 : 0.0) - std::exp(logps[static_cast<std::size_t>(i)]);
    grad[bias_offset + static_cast<std::size_t>(i)] += weight * score;
    if (f >= 0) {
      grad[weight_offset + static_cast<std::size_t>(i * dim + f)] +=
          weight * score;
    }
  }
}

std::vector<double> ToyTemplatePolicy::logprob_grad(
    const data::VqaRecord& record, std::string_view response) const {
  std::vector<Outcome> matches;
  std::vector<double> logps;
  for (const auto& [outcome, rendered] : enumerate_support(record)) {
    if (rendered == response) {
      matches.push_back(outcome);
      logps.push_back(outcome_logprob(record, outcome));
    }
  }
  if (matches.empty()) {
    throw std::invalid_argument("logprob_grad: response outside policy support");
  }
  const double total = logsumexp(logps);
  const int letters = static_cast<int>(record.options.size());
  std::vector<double> grad(param_count(), 0.0);
  for (std::size_t m = 0; m < matches.size(); ++m) {
    const double weight = std::exp(logps[m] - total);  // posterior over aliases
    accumulate_score_grad(grad, 0, kNumTemplates,
                          static_cast<int>(matches[m].tmpl), record, weight);
    accumulate_score_grad(grad, 1, letters, matches[m].letter, record, weight);
    accumulate_score_grad(grad, 2, kNumStyles,
                          static_cast<int>(matches[m].style), record, weight);
  }
  return grad;
}

std::vector<double> ToyTemplatePolicy::params() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (int h = 0; h < 3; ++h) out.insert(out.end(), bias_[h].begin(), bias_[h].end());
  for (int h = 0; h < 3; ++h) {
    out.insert(out.end(), weight_[h].begin(), weight_[h].end());
  }
  return out;
}

void ToyTemplatePolicy::set_params(std::span<const double> params) {
  if (params.size() != param_count()) {
    throw std::invalid_argument("set_params: expected " +
                                std::to_string(param_count()) +
                                " parameters, got " +
                                std::to_string(params.size()));
  }
  std::size_t pos = 0;
  for (int h = 0; h < 3; ++h) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos),
                bias_[h].size(), bias_[h].begin());
    pos += bias_[h].size();
  }
  for (int h = 0; h < 3; ++h) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(pos),
                weight_[h].size(), weight_[h].begin());
    pos += weight_[h].size();
  }
}

std::unique_ptr<Policy> ToyTemplatePolicy::snapshot() const {
  return std::make_unique<ToyTemplatePolicy>(*this);
}

std::size_t ToyTemplatePolicy::param_count() const {
  const std::size_t heads = kNumTemplates + kMaxLetters + kNumStyles;
  return heads + heads * static_cast<std::size_t>(feature_dim());
}

void ToyTemplatePolicy::force_template(TemplateKind tmpl) {
  for (std::size_t i = 0; i < bias_[0].size(); ++i) {
    bias_[0][i] = i == static_cast<std::size_t>(tmpl) ? kForceLogit : -kForceLogit;
  }
}

void ToyTemplatePolicy::force_style(AnswerStyle style) {
  for (std::size_t i = 0; i < bias_[2].size(); ++i) {
    bias_[2][i] = i == static_cast<std::size_t>(style) ? kForceLogit : -kForceLogit;
  }
}

void save_policy(const ToyTemplatePolicy& policy,
                 const std::filesystem::path& path) {
  static const char* kHeadNames[3] = {"template", "letter", "style"};
  json j;
  j["policy"] = "toy_template";
  j["categories"] = policy.categories_;
  for (int h = 0; h < 3; ++h) {
    j["heads"][kHeadNames[h]]["bias"] = policy.bias_[h];
    j["heads"][kHeadNames[h]]["weight"] = policy.weight_[h];
  }
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + path.string());
  }
  out << j.dump(2) << '\n';
}

ToyTemplatePolicy load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint is not valid JSON: " + path.string() +
                             ": " + e.what());
  }
  if (j.value("policy", "") != std::string("toy_template")) {
    throw std::runtime_error("checkpoint schema mismatch: expected policy "
                             "'toy_template' in " + path.string());
  }
  ToyTemplatePolicy policy(j.at("categories").get<std::vector<std::string>>());
  static const char* kHeadNames[3] = {"template", "letter", "style"};
  for (int h = 0; h < 3; ++h) {
    const auto& head = j.at("heads").at(kHeadNames[h]);
    auto bias = head.at("bias").get<std::vector<double>>();
    auto weight = head.at("weight").get<std::vector<double>>();
    if (bias.size() != policy.bias_[h].size() ||
        weight.size() != policy.weight_[h].size()) {
      throw std::runtime_error("checkpoint schema mismatch: head '" +
                               std::string(kHeadNames[h]) +
                               "' has unexpected shape in " + path.string());
    }
    policy.bias_[h] = std::move(bias);
    policy.weight_[h] = std::move(weight);
  }
  return policy;
}

double exact_categorical_kl(const ToyTemplatePolicy& p,
                            const ToyTemplatePolicy& q,
                            const data::VqaRecord& record) {
  double kl = 0.0;
  for (const auto& [outcome, rendered] :
       ToyTemplatePolicy::enumerate_support(record)) {
    (void)rendered;
    const double lp = p.outcome_logprob(record, outcome);
    const double lq = q.outcome_logprob(record, outcome);
    kl += std::exp(lp) * (lp - lq);
  }
  return kl;
}

}  // namespace grpolab::policy

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>

#include "grpolab/policy.hpp"
#include "grpolab/reward.hpp"
#include "grpolab/rng.hpp"

using namespace grpolab;
using namespace grpolab::policy;

namespace {

data::VqaRecord four_option_record() {
  data::VqaRecord r;
  r.id = "rec-4";
  r.question = "Which finding is present?";
  r.options = {"Focal lesion", "Diffuse opacity", "Linear artifact",
               "Normal study"};
  r.gt_letter = 'B';
  r.modality = "synth";
  return r;
}

data::VqaRecord categorized_record(const std::string& category) {
  data::VqaRecord r = four_option_record();
  r.id = "rec-cat-" + category;
  r.category = category;
  return r;
}

ToyTemplatePolicy randomized_policy(std::vector<std::string> categories,
                                    std::uint64_t seed) {
  ToyTemplatePolicy policy(std::move(categories));
  std::mt19937_64 engine(seed);
  std::vector<double> params = policy.params();
  for (double& p : params) p = 2.0 * (rng::uniform01(engine) - 0.5);
  policy.set_params(params);
  return policy;
}

}  // namespace

TEST_CASE("uniform policy assigns ln(1/48) to every sample of a 4-option record") {
  const ToyTemplatePolicy policy;
  const auto record = four_option_record();
  std::mt19937_64 engine(1);
  for (int i = 0; i < 20; ++i) {
    const auto [response, logp] = policy.sample(record, engine);
    CHECK(logp == doctest::Approx(std::log(1.0 / 48.0)).epsilon(1e-12));
    CHECK(policy.logprob(record, response) == doctest::Approx(logp).epsilon(1e-12));
  }
}

TEST_CASE("render/parse round trip: outcomes have the promised reward shape") {
  const auto record = four_option_record();
  const auto choices = record.choices();

  const std::string good = ToyTemplatePolicy::render(
      record, {TemplateKind::WellFormed, 1, AnswerStyle::LetterOnly});
  const auto parsed = reward::parse_tagged_response(good);
  CHECK(parsed.well_formed);
  CHECK(*parsed.answer_content == "B");

  const std::string outside = ToyTemplatePolicy::render(
      record, {TemplateKind::ContentOutsideTags, 1, AnswerStyle::LetterOnly});
  CHECK(reward::total_reward(outside, choices).format_reward == 0.0);

  const std::string unclosed = ToyTemplatePolicy::render(
      record, {TemplateKind::MissingThinkClose, 0, AnswerStyle::OptionTextOnly});
  CHECK(reward::total_reward(unclosed, choices).format_reward == 0.0);

  const std::string duplicated = ToyTemplatePolicy::render(
      record, {TemplateKind::DuplicatedAnswerTag, 2, AnswerStyle::LetterOnly});
  CHECK(reward::total_reward(duplicated, choices).format_reward == 0.0);
}

TEST_CASE("support enumeration: distinct strings, normalized probabilities") {
  const auto record = four_option_record();
  const auto support = ToyTemplatePolicy::enumerate_support(record);
  CHECK(support.size() == 48);

  std::map<std::string, int> unique;
  for (const auto& [outcome, rendered] : support) unique[rendered] += 1;
  CHECK(unique.size() == 48);

  for (const auto& policy :
       {ToyTemplatePolicy{}, randomized_policy({}, 17)}) {
    double total = 0.0;
    for (const auto& [outcome, rendered] : support) {
      total += std::exp(policy.logprob(record, rendered));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("out-of-support strings score negative infinity") {
  const ToyTemplatePolicy policy;
  const auto record = four_option_record();
  CHECK(policy.logprob(record, "free-form text") == kNegInf);
  CHECK(policy.logprob(record, "") == kNegInf);
  CHECK_THROWS_AS(policy.logprob_grad(record, "free-form text"),
                  std::invalid_argument);
}

TEST_CASE("sampler/scorer agreement over 100k draws") {
  const auto record = four_option_record();
  const ToyTemplatePolicy policy = randomized_policy({}, 23);

  constexpr int kDraws = 100000;
  std::mt19937_64 engine(404);
  std::map<std::string, int> counts;
  for (int i = 0; i < kDraws; ++i) {
    const auto [outcome, logp] = policy.sample_outcome(record, engine);
    counts[ToyTemplatePolicy::render(record, outcome)] += 1;
  }

  for (const auto& [outcome, rendered] :
       ToyTemplatePolicy::enumerate_support(record)) {
    const double p = std::exp(policy.outcome_logprob(record, outcome));
    const double freq = static_cast<double>(counts[rendered]) / kDraws;
    const double sigma = std::sqrt(p * (1.0 - p) / kDraws);
    CAPTURE(rendered);
    CHECK(std::abs(freq - p) <= 3.0 * sigma + 1e-12);
  }
}

TEST_CASE("letter masking: zero probability and zero gradient beyond the options") {
  data::VqaRecord record = four_option_record();
  record.options = {"Focal lesion", "Diffuse opacity"};  // two letters only
  record.gt_letter = 'A';
  const ToyTemplatePolicy policy = randomized_policy({}, 31);

  std::mt19937_64 engine(8);
  for (int i = 0; i < 2000; ++i) {
    const auto [outcome, logp] = policy.sample_outcome(record, engine);
    (void)logp;
    CHECK(outcome.letter < 2);
  }
  CHECK(policy.outcome_logprob(record, {TemplateKind::WellFormed, 3,
                                        AnswerStyle::LetterOnly}) == kNegInf);

  // gradient components of masked letter logits stay zero
  const std::string response = ToyTemplatePolicy::render(
      record, {TemplateKind::WellFormed, 1, AnswerStyle::LetterOnly});
  const auto grad = policy.logprob_grad(record, response);
  // letter bias block sits after the template biases
  for (int masked = 2; masked < kMaxLetters; ++masked) {
    CHECK(grad[static_cast<std::size_t>(kNumTemplates + masked)] == 0.0);
  }
}

TEST_CASE("logprob_grad: uniform-head closed form and finite differences") {
  const auto record = four_option_record();

  SUBCASE("uniform closed form") {
    const ToyTemplatePolicy policy;
    const std::string response = ToyTemplatePolicy::render(
        record, {TemplateKind::WellFormed, 2, AnswerStyle::LetterOnly});
    const auto grad = policy.logprob_grad(record, response);
    // template head: chosen 0 of 4
    CHECK(grad[0] == doctest::Approx(1.0 - 0.25).epsilon(1e-12));
    CHECK(grad[1] == doctest::Approx(-0.25).epsilon(1e-12));
    // letter head: chosen 2 of 4 (masked from 6)
    CHECK(grad[kNumTemplates + 2] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(grad[kNumTemplates + 0] == doctest::Approx(-0.25).epsilon(1e-12));
    // style head: chosen 0 of 3
    CHECK(grad[kNumTemplates + kMaxLetters + 0] ==
          doctest::Approx(1.0 - 1.0 / 3).epsilon(1e-12));

    // each head's components sum to zero
    double tmpl_sum = 0.0, letter_sum = 0.0, style_sum = 0.0;
    for (int i = 0; i < kNumTemplates; ++i) tmpl_sum += grad[i];
    for (int i = 0; i < kMaxLetters; ++i) letter_sum += grad[kNumTemplates + i];
    for (int i = 0; i < kNumStyles; ++i) {
      style_sum += grad[kNumTemplates + kMaxLetters + i];
    }
    CHECK(tmpl_sum == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(letter_sum == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(style_sum == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("finite differences with context features") {
    const std::vector<std::string> categories = {"k-alpha", "k-beta"};
    ToyTemplatePolicy policy = randomized_policy(categories, 77);
    const auto record_ctx = categorized_record("k-beta");
    std::mt19937_64 engine(5);
    const auto [response, logp] = policy.sample(record_ctx, engine);
    (void)logp;

    const auto analytic = policy.logprob_grad(record_ctx, response);
    std::vector<double> params = policy.params();
    const double h = 1e-6;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const double saved = params[k];
      params[k] = saved + h;
      policy.set_params(params);
      const double hi = policy.logprob(record_ctx, response);
      params[k] = saved - h;
      policy.set_params(params);
      const double lo = policy.logprob(record_ctx, response);
      params[k] = saved;
      const double fd = (hi - lo) / (2 * h);
      const double denom = std::max({std::abs(analytic[k]), std::abs(fd), 1e-3});
      CHECK(std::abs(analytic[k] - fd) / denom <= 1e-6);
    }
  }
}

TEST_CASE("snapshot: frozen copies are isolated and idempotent") {
  ToyTemplatePolicy live = randomized_policy({}, 3);
  const auto record = four_option_record();
  const std::string response = ToyTemplatePolicy::render(
      record, {TemplateKind::WellFormed, 1, AnswerStyle::LetterOnly});

  const auto frozen = live.snapshot();
  const auto frozen_twice = frozen->snapshot();
  const double before = live.logprob(record, response);
  CHECK(frozen->logprob(record, response) == before);
  CHECK(frozen_twice->logprob(record, response) == before);

  // perturb a single logit; a uniform shift would cancel in the softmax
  std::vector<double> params = live.params();
  params[0] += 0.5;
  live.set_params(params);
  CHECK(live.logprob(record, response) != before);
  CHECK(frozen->logprob(record, response) == before);
  CHECK(frozen_twice->logprob(record, response) == before);
}

TEST_CASE("greedy decoding is the most probable outcome and deterministic") {
  ToyTemplatePolicy policy = randomized_policy({}, 11);
  const auto record = four_option_record();
  const auto [response, logp] = policy.greedy(record);
  CHECK(response == policy.greedy(record).first);

  double best = -1e300;
  for (const auto& [outcome, rendered] :
       ToyTemplatePolicy::enumerate_support(record)) {
    best = std::max(best, policy.outcome_logprob(record, outcome));
  }
  CHECK(logp == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("forced heads pin the named component") {
  ToyTemplatePolicy policy;
  policy.force_template(TemplateKind::WellFormed);
  policy.force_style(AnswerStyle::LetterOnly);
  const auto record = four_option_record();
  std::mt19937_64 engine(2);
  std::map<int, int> letter_counts;
  for (int i = 0; i < 400; ++i) {
    const auto [outcome, logp] = policy.sample_outcome(record, engine);
    CHECK(outcome.tmpl == TemplateKind::WellFormed);
    CHECK(outcome.style == AnswerStyle::LetterOnly);
    letter_counts[outcome.letter] += 1;
  }
  CHECK(letter_counts.size() == 4);  // letters stay uniform
}

TEST_CASE("checkpoint round trip is lossless") {
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "grpolab_test_checkpoint.json";
  const ToyTemplatePolicy policy = randomized_policy({"k-alpha", "k-beta"}, 639);
  save_policy(policy, path);
  const ToyTemplatePolicy reloaded = load_policy(path);
  std::filesystem::remove(path);

  CHECK(reloaded.categories() == policy.categories());
  const auto a = policy.params();
  const auto b = reloaded.params();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("load_policy rejects schema mismatches") {
  const std::filesystem::path path =
      std::filesystem::temp_directory_path() / "grpolab_bad_checkpoint.json";
  {
    std::ofstream out(path);
    out << R"({"policy":"something_else"})";
  }
  CHECK_THROWS_AS(load_policy(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("exact categorical KL: zero at equality, positive otherwise") {
  const auto record = four_option_record();
  const ToyTemplatePolicy p = randomized_policy({}, 41);
  CHECK(exact_categorical_kl(p, p, record) == doctest::Approx(0.0).epsilon(1e-12));
  const ToyTemplatePolicy q = randomized_policy({}, 42);
  CHECK(exact_categorical_kl(p, q, record) > 0.0);
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grpolab/reward.hpp"

namespace grpolab::data {

// One multiple-choice question. image_ref is carried for schema fidelity but
// never opened at desk scale.
struct VqaRecord {
  std::string id;
  std::string image_ref;
  std::string question;
  std::vector<std::string> options;  // letters assigned by position
  char gt_letter = 'A';
  std::string modality;
  std::string category;  // optional synthetic feature label; empty when unused

  reward::ChoiceSet choices() const { return {options, gt_letter}; }

  bool operator==(const VqaRecord&) const = default;
};

// Raised by load_records; message lists every offending line by number.
class RecordParseError : public std::runtime_error {
 public:
  RecordParseError(std::string message, std::vector<std::string> line_errors)
      : std::runtime_error(std::move(message)),
        line_errors_(std::move(line_errors)) {}
  const std::vector<std::string>& line_errors() const { return line_errors_; }

 private:
  std::vector<std::string> line_errors_;
};

// Newline-delimited JSON records with fields id, image_ref, question,
// options, gt_letter, modality, category. Blank lines are skipped. Any
// malformed line (bad JSON, missing field, option count outside [2, 6],
// ground-truth letter out of range, duplicate id) is reported with its line
// number via RecordParseError.
std::vector<VqaRecord> load_records(std::istream& in);
std::vector<VqaRecord> load_records_file(const std::filesystem::path& path);

void save_records(std::ostream& out, std::span<const VqaRecord> records);
void save_records_file(const std::filesystem::path& path,
                       std::span<const VqaRecord> records);

// Question, one line of lettered options, then the fixed three-numbered
// instruction block. Byte-stable; a golden copy of the instruction block is
// checked in under data/.
std::string render_prompt(const VqaRecord& record);
std::string_view prompt_instructions();

// Disjoint id sets naming the experiment splits.
struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> id_test;
  std::vector<std::string> ood_test;
};

// Throws std::invalid_argument on duplicate ids within or across splits.
void validate_split(const SplitSpec& split);

// A synthetic task family. Category c's ground-truth option text is
// findings[c]; the question and the category field expose only the surface
// token for c. The OOD variant rotates the surface encoding while keeping the
// category -> ground-truth rule, so a policy keying on surface tokens
// degrades out of distribution.
struct FamilySpec {
  std::string name = "synth";
  std::vector<std::string> findings;
  std::vector<std::string> surfaces;
  int options_per_record = 4;
  bool ood_shift = false;
};

// Returns a builtin four-category family for quick experiments.
FamilySpec default_family(bool ood_shift);

// n stratified records (category = index mod #categories). The ground-truth
// letter is a deterministic function of the category, so the mapping is
// learnable from the surface token; distractor placement is seeded.
std::vector<VqaRecord> generate_synthetic_family(const FamilySpec& spec, int n,
                                                 std::uint64_t seed);

// Context-free records sharing one fixed ground-truth position: the bandit
// task used for convergence checks. Deterministic.
std::vector<VqaRecord> generate_bandit_records(int n, int num_options,
                                               int gt_index);

}  // namespace grpolab::data

#include "grpolab/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "grpolab/rng.hpp"

namespace grpolab::data {

namespace {

using nlohmann::json;

constexpr std::string_view kPromptInstructions =
    "Your task:\n"
    "1. Think through the question step by step, enclose your reasoning "
    "process in <think>...</think> tags.\n"
    "2. Then provide the correct single-letter choice (A, B, C, D,...) inside "
    "<answer>...</answer> tags.\n"
    "3. No extra information or text outside of these tags.";

std::string field_or(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  return it->get<std::string>();
}

VqaRecord record_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  VqaRecord r;
  if (!j.contains("id")) throw std::invalid_argument("missing field 'id'");
  r.id = j.at("id").get<std::string>();
  if (!j.contains("question")) {
    throw std::invalid_argument("missing field 'question'");
  }
  r.question = j.at("question").get<std::string>();
  if (!j.contains("options") || !j.at("options").is_array()) {
    throw std::invalid_argument("missing or non-array field 'options'");
  }
  r.options = j.at("options").get<std::vector<std::string>>();
  if (r.options.size() < reward::ChoiceSet::kMinOptions ||
      r.options.size() > reward::ChoiceSet::kMaxOptions) {
    throw std::invalid_argument("option count " +
                                std::to_string(r.options.size()) +
                                " outside [2, 6]");
  }
  const std::string gt = field_or(j, "gt_letter");
  if (gt.size() != 1 || gt[0] < 'A' ||
      gt[0] >= static_cast<char>('A' + r.options.size())) {
    throw std::invalid_argument("gt_letter '" + gt +
                                "' out of range for the option list");
  }
  r.gt_letter = gt[0];
  r.image_ref = field_or(j, "image_ref");
  r.modality = field_or(j, "modality");
  r.category = field_or(j, "category");
  return r;
}

json record_to_json(const VqaRecord& r) {
  return json{{"id", r.id},
              {"image_ref", r.image_ref},
              {"question", r.question},
              {"options", r.options},
              {"gt_letter", std::string(1, r.gt_letter)},
              {"modality", r.modality},
              {"category", r.category}};
}

}  // namespace

std::vector<VqaRecord> load_records(std::istream& in) {
  std::vector<VqaRecord> records;
  std::vector<std::string> errors;
  std::unordered_map<std::string, int> seen_ids;  // id -> first line
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      VqaRecord r = record_from_json(j);
      auto [it, inserted] = seen_ids.emplace(r.id, line_no);
      if (!inserted) {
        throw std::invalid_argument("duplicate id '" + r.id +
                                    "' (first seen on line " +
                                    std::to_string(it->second) + ")");
      }
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      errors.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string message = "invalid record file:";
    for (const auto& e : errors) {
      message += "\n  ";
      message += e;
    }
    throw RecordParseError(message, errors);
  }
  return records;
}

std::vector<VqaRecord> load_records_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open record file: " + path.string());
  }
  return load_records(in);
}

void save_records(std::ostream& out, std::span<const VqaRecord> records) {
  for (const auto& r : records) {
    out << record_to_json(r).dump() << '\n';
  }
}

void save_records_file(const std::filesystem::path& path,
                       std::span<const VqaRecord> records) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write record file: " + path.string());
  }
  save_records(out, records);
}

std::string_view prompt_instructions() { return kPromptInstructions; }

std::string render_prompt(const VqaRecord& record) {
  std::string out = record.question;
  out += '\n';
  for (std::size_t i = 0; i < record.options.size(); ++i) {
    if (i > 0) out += ' ';
    out += static_cast<char>('A' + i);
    out += ") ";
    out += record.options[i];
  }
  out += '\n';
  out += kPromptInstructions;
  return out;
}

void validate_split(const SplitSpec& split) {
  std::set<std::string> seen;
  auto add_all = [&](const std::vector<std::string>& ids, const char* name) {
    for (const auto& id : ids) {
      if (!seen.insert(id).second) {
        throw std::invalid_argument("split leakage: id '" + id +
                                    "' appears more than once (while adding " +
                                    name + ")");
      }
    }
  };
  add_all(split.train, "train");
  add_all(split.id_test, "id_test");
  add_all(split.ood_test, "ood_test");
}

FamilySpec default_family(bool ood_shift) {
  FamilySpec spec;
  spec.name = "synth";
  spec.findings = {"Focal lesion", "Diffuse opacity", "Linear artifact",
                   "Normal study"};
  spec.surfaces = {"k-alpha", "k-beta", "k-gamma", "k-delta"};
  spec.options_per_record = 4;
  spec.ood_shift = ood_shift;
  return spec;
}

std::vector<VqaRecord> generate_synthetic_family(const FamilySpec& spec, int n,
                                                 std::uint64_t seed) {
  if (n <= 0) {
    throw std::invalid_argument("generate_synthetic_family: n must be > 0");
  }
  const std::size_t k = spec.findings.size();
  if (k < 2) {
    throw std::invalid_argument(
        "generate_synthetic_family: need at least 2 categories");
  }
  if (spec.surfaces.size() != k) {
    throw std::invalid_argument(
        "generate_synthetic_family: one surface token per category required");
  }
  const int m = spec.options_per_record;
  if (m < static_cast<int>(reward::ChoiceSet::kMinOptions) ||
      m > static_cast<int>(reward::ChoiceSet::kMaxOptions) ||
      m > static_cast<int>(k)) {
    throw std::invalid_argument(
        "generate_synthetic_family: options_per_record must be in [2, 6] and "
        "not exceed the category count");
  }

  std::vector<VqaRecord> records;
  records.reserve(static_cast<std::size_t>(n));
  const std::string variant = spec.ood_shift ? "ood" : "id";
  for (int i = 0; i < n; ++i) {
    const std::size_t category = static_cast<std::size_t>(i) % k;
    // Letter position is a deterministic function of the category, so the
    // surface -> letter rule is learnable; the OOD variant only re-encodes
    // the surface token.
    const int gt_pos = static_cast<int>(category) % m;
    const std::size_t surface_index =
        spec.ood_shift ? (category + 1) % k : category;

    // Distractors are the cyclically-next findings; a seeded rotation varies
    // their placement without touching the ground-truth slot.
    std::vector<std::string> distractors;
    for (int t = 1; t < m; ++t) {
      distractors.push_back(spec.findings[(category + t) % k]);
    }
    auto stream = rng::stream_for(seed, static_cast<std::uint64_t>(i), 0,
                                  spec.name + "/" + variant);
    std::rotate(distractors.begin(),
                distractors.begin() +
                    static_cast<std::ptrdiff_t>(stream() % distractors.size()),
                distractors.end());

    VqaRecord r;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    r.id = spec.name + "-" + variant + "-" + buf;
    r.image_ref = "synthetic://" + spec.name + "/" + r.id;
    r.question = "The study highlights marker " + spec.surfaces[surface_index] +
                 ". Which finding does it indicate?";
    r.options.resize(m);
    int d = 0;
    for (int slot = 0; slot < m; ++slot) {
      r.options[slot] =
          slot == gt_pos ? spec.findings[category] : distractors[d++];
    }
    r.gt_letter = static_cast<char>('A' + gt_pos);
    r.modality = spec.name + "_" + variant;
    r.category = spec.surfaces[surface_index];
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<VqaRecord> generate_bandit_records(int n, int num_options,
                                               int gt_index) {
  if (n <= 0) {
    throw std::invalid_argument("generate_bandit_records: n must be > 0");
  }
  static const std::vector<std::string> kPool = {
      "Focal lesion",   "Diffuse opacity", "Linear artifact",
      "Normal study",   "Motion blur",     "Calcified focus"};
  if (num_options < static_cast<int>(reward::ChoiceSet::kMinOptions) ||
      num_options > static_cast<int>(kPool.size())) {
    throw std::invalid_argument(
        "generate_bandit_records: num_options outside [2, 6]");
  }
  if (gt_index < 0 || gt_index >= num_options) {
    throw std::invalid_argument("generate_bandit_records: gt_index out of range");
  }
  std::vector<VqaRecord> records;
  records.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    VqaRecord r;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    r.id = std::string("bandit-") + buf;
    r.image_ref = "synthetic://bandit/" + r.id;
    r.question = "Which finding is present?";
    r.options.assign(kPool.begin(), kPool.begin() + num_options);
    r.gt_letter = static_cast<char>('A' + gt_index);
    r.modality = "bandit";
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace grpolab::data

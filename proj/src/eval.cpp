#include "grpolab/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "grpolab/rng.hpp"

namespace grpolab::eval {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string format_pct(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

}  // namespace

double EvalReport::average_pct() const {
  double sum = 0.0;
  int present = 0;
  for (const auto& m : per_modality) {
    if (m.n > 0) {
      sum += m.accuracy_pct();
      ++present;
    }
  }
  return present == 0 ? 0.0 : sum / present;
}

int score_strict(std::string_view response, const reward::ChoiceSet& choices,
                 bool case_sensitive) {
  const reward::ParsedResponse parsed =
      reward::parse_tagged_response(response);
  if (!parsed.well_formed) return 0;
  const std::string_view answer = trim(*parsed.answer_content);
  if (answer.size() != 1) return 0;
  const char got = answer[0];
  const char want = choices.gt_letter();
  if (case_sensitive) return got == want ? 1 : 0;
  return std::toupper(static_cast<unsigned char>(got)) == want ? 1 : 0;
}

EvalReport evaluate(const policy::Policy& policy,
                    std::span<const data::VqaRecord> records,
                    Decoding decoding, std::uint64_t seed,
                    std::string method_label, bool case_sensitive) {
  EvalReport report;
  report.method_label = std::move(method_label);
  if (records.empty()) {
    report.warnings.push_back("no records to evaluate");
    return report;
  }

  auto stats_for = [&](const std::string& modality) -> ModalityStats& {
    for (auto& m : report.per_modality) {
      if (m.modality == modality) return m;
    }
    report.per_modality.push_back({modality, 0, 0});
    return report.per_modality.back();
  };

  for (const auto& record : records) {
    std::string response;
    if (decoding == Decoding::Greedy) {
      response = policy.greedy(record).first;
    } else {
      auto stream = rng::stream_for(seed, 0, 0, record.id);
      response = policy.sample(record, stream).first;
    }
    const int verdict = score_strict(response, record.choices(), case_sensitive);

    const reward::ParsedResponse parsed =
        reward::parse_tagged_response(response);
    RecordVerdict v;
    v.id = record.id;
    v.extracted_answer = parsed.answer_content.value_or("");
    v.verdict = verdict;
    report.verdicts.push_back(std::move(v));

    ModalityStats& stats = stats_for(record.modality);
    stats.n += 1;
    stats.correct += verdict;
  }
  return report;
}

std::string render_table(std::span<const EvalReport> reports) {
  // Union of modality columns, in first-appearance order across reports.
  std::vector<std::string> modalities;
  for (const auto& report : reports) {
    for (const auto& m : report.per_modality) {
      if (std::find(modalities.begin(), modalities.end(), m.modality) ==
          modalities.end()) {
        modalities.push_back(m.modality);
      }
    }
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header = {"Method", "Seen"};
  header.insert(header.end(), modalities.begin(), modalities.end());
  header.push_back("Average");
  rows.push_back(header);

  for (const auto& report : reports) {
    std::vector<std::string> row;
    row.push_back(report.method_label.empty() ? "-" : report.method_label);
    row.push_back(report.seen_samples ? std::to_string(*report.seen_samples)
                                      : "/");
    for (const auto& name : modalities) {
      const auto it = std::find_if(
          report.per_modality.begin(), report.per_modality.end(),
          [&](const ModalityStats& m) { return m.modality == name; });
      if (it == report.per_modality.end() || it->n == 0) {
        row.push_back("-");
      } else {
        row.push_back(format_pct(it->accuracy_pct()));
      }
    }
    row.push_back(format_pct(report.average_pct()));
    rows.push_back(row);
  }

  std::vector<std::size_t> widths(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c];
      if (c + 1 < row.size()) {
        out << std::string(widths[c] - row[c].size() + 2, ' ');
      }
    }
    out << '\n';
  }
  return out.str();
}

std::string render_table(const EvalReport& report) {
  return render_table(std::span<const EvalReport>(&report, 1));
}

std::string report_json_string(const EvalReport& report) {
  json j;
  j["method"] = report.method_label;
  if (report.seen_samples) {
    j["seen_samples"] = *report.seen_samples;
  } else {
    j["seen_samples"] = nullptr;
  }
  j["modalities"] = json::array();
  for (const auto& m : report.per_modality) {
    j["modalities"].push_back({{"modality", m.modality},
                               {"n", m.n},
                               {"correct", m.correct},
                               {"accuracy_pct", m.accuracy_pct()}});
  }
  j["average_pct"] = report.average_pct();
  j["warnings"] = report.warnings;
  j["verdicts"] = json::array();
  for (const auto& v : report.verdicts) {
    j["verdicts"].push_back({{"id", v.id},
                             {"extracted_answer", v.extracted_answer},
                             {"verdict", v.verdict}});
  }
  return j.dump(2);
}

}  // namespace grpolab::eval

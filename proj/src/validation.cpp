#include "crowdbias/validation.hpp"

#include <algorithm>
#include <numeric>

#include "crowdbias/csv.hpp"
#include "crowdbias/error.hpp"

namespace crowdbias {

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("mse: length mismatch");
  if (a.empty()) throw InputError("mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("auroc: length mismatch");
  std::size_t positives = 0;
  for (int label : labels) {
    if (label != 0 && label != 1) throw InputError("auroc: labels must be 0 or 1");
    positives += label;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw InputError("auroc: both classes must be present");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return scores[x] < scores[y]; });
  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t tied_positives = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tied_positives += labels[order[j]];
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(tied_positives);
    i = j;
  }
  const double np = static_cast<double>(positives);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

std::vector<Judgement> load_judgements(const std::string& path) {
  const auto rows = csv::read_file(path);
  if (rows.empty() || rows[0].fields.size() < 2 || rows[0].fields[0] != "entity_id" ||
      rows[0].fields[1] != "score") {
    throw InputError(path + ": expected header entity_id,score");
  }
  std::vector<Judgement> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != 2) {
      throw InputError(path + ":" + std::to_string(rows[r].line) + ": expected 2 fields");
    }
    try {
      std::size_t used = 0;
      const double score = std::stod(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("trailing characters");
      if (score < 0.0 || score > 1.0) throw std::out_of_range("score outside [0,1]");
      out.push_back({f[0], score});
    } catch (const std::exception&) {
      throw InputError(path + ":" + std::to_string(rows[r].line) +
                       ": score must be a number in [0, 1]");
    }
  }
  return out;
}

ValidationReport validate_quality(const QualityScores& scores,
                                  const std::vector<Judgement>& worker_judgements,
                                  const std::vector<Judgement>& unit_judgements) {
  ValidationReport report;

  std::vector<double> manual;
  std::vector<double> computed;
  for (const auto& j : worker_judgements) {
    const auto it = scores.wqs.find(j.entity_id);
    if (it == scores.wqs.end()) {
      report.unresolved_workers.push_back(j.entity_id);
      continue;
    }
    manual.push_back(j.score);
    computed.push_back(it->second);
  }
  report.n_workers = manual.size();
  if (manual.size() >= 2) {
    report.mse_wqs = mse(manual, computed);
  } else {
    report.notes.push_back("worker statistic absent: fewer than two resolved workers");
  }

  std::vector<double> ambiguity_scores;
  std::vector<int> ambiguous;
  for (const auto& j : unit_judgements) {
    const auto it = scores.uqs.find(j.entity_id);
    if (it == scores.uqs.end()) {
      report.unresolved_units.push_back(j.entity_id);
      continue;
    }
    ambiguity_scores.push_back(1.0 - it->second);
    ambiguous.push_back(j.score >= 0.5 ? 1 : 0);
  }
  report.n_units = ambiguous.size();
  const auto positives = std::count(ambiguous.begin(), ambiguous.end(), 1);
  if (ambiguous.size() < 2) {
    report.notes.push_back("unit statistic absent: fewer than two resolved units");
  } else if (positives == 0 || positives == static_cast<long>(ambiguous.size())) {
    report.notes.push_back("unit statistic absent: only one ambiguity class present");
  } else {
    report.auroc_uqs = auroc(ambiguity_scores, ambiguous);
  }
  return report;
}

}  // namespace crowdbias

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdbias/crowdtruth.hpp"

namespace crowdbias {

// Mean squared difference. Throws InputError on a length mismatch or empty
// input.
double mse(std::span<const double> a, std::span<const double> b);

// Mann-Whitney AUROC: probability that a random positive outscores a random
// negative, ties counting one half. Labels are 0/1; both classes must occur.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct Judgement {
  std::string entity_id;
  double score = 0.0;
};

// entity_id,score CSV.
std::vector<Judgement> load_judgements(const std::string& path);

struct ValidationReport {
  // Against manual worker quality in [0,1] (fraction of labels judged correct).
  std::optional<double> mse_wqs;
  // AUROC of (1 - UQS) against manual ambiguity (1 = ambiguous), so that a
  // higher value means ambiguity is better identified.
  std::optional<double> auroc_uqs;
  std::size_t n_workers = 0;
  std::size_t n_units = 0;
  std::vector<std::string> unresolved_workers;
  std::vector<std::string> unresolved_units;
  std::vector<std::string> notes;
};

// A statistic is left empty when fewer than two entities resolve, or (for
// the AUROC) when only one ambiguity class is present.
ValidationReport validate_quality(const QualityScores& scores,
                                  const std::vector<Judgement>& worker_judgements,
                                  const std::vector<Judgement>& unit_judgements);

}  // namespace crowdbias

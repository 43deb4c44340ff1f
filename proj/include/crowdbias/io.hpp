#pragma once

#include <string>

#include "crowdbias/aggregation.hpp"
#include "crowdbias/bias.hpp"
#include "crowdbias/crowdtruth.hpp"
#include "crowdbias/dataset.hpp"
#include "crowdbias/validation.hpp"
#include "json.hpp"

namespace crowdbias {

// scores.json: {uqs, wqs, aqs, iterations, converged, skipped_units}
nlohmann::json to_json(const QualityScores& scores);
QualityScores quality_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DistributionReport& report);
nlohmann::json to_json(const BiasResult& result);
nlohmann::json to_json(const WorkerPartition& partition);
nlohmann::json to_json(const GroupMatrix& matrix);
nlohmann::json to_json(const ValidationReport& report);
nlohmann::json to_json(const AdrTable& table);

// sample_id,mv_label,tie,counts_json
std::string majority_vote_csv(const AggregatedLabels& labels);

// worker_id,wqs,annotations
std::string removed_workers_csv(const std::vector<RemovedWorker>& removed);

nlohmann::json read_json_file(const std::string& path);
// Writes `j` with two-space indentation and a trailing newline.
void write_json_file(const nlohmann::json& j, const std::string& path);
void write_text_file(const std::string& text, const std::string& path);

// Fixed-precision decimal used in every CSV/SVG number.
std::string format_number(double value, int decimals = 6);

}  // namespace crowdbias

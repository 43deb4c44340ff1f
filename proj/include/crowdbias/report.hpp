#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crowdbias/crowdtruth.hpp"
#include "crowdbias/dataset.hpp"
#include "crowdbias/models.hpp"
#include "crowdbias/simulator.hpp"
#include "json.hpp"

namespace crowdbias {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// A failure inside one pipeline stage (exit code 2 in the CLI).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct PipelineConfig {
  // Exactly one of `data` and `simulate`.
  std::optional<DatasetPaths> data;
  std::optional<CrowdProfile> simulate;

  // 1-4, or 0 to pick set-up 1 on a -2..2 scale and set-up 4 otherwise.
  int setup = 0;
  bool run_quality = true;
  QualityOptions quality;
  double wqs_threshold = 0.0;
  bool force_filter = false;
  // Grouping strings (see GroupingSpec::parse). Empty: ADR in 5 bins over
  // the observed range plus one grouping per protected attribute.
  std::vector<std::string> groupings;
  std::vector<std::string> models = {"m1", "m2", "oracle"};
  TrainConfig train;
  double eval_fraction = 0.2;
  std::uint64_t split_seed = 42;
  std::size_t min_group_size = 5;
  std::size_t histogram_bins = 20;
  // attribute -> category -> desired fraction of workers
  std::map<std::string, std::map<std::string, double>> target_distribution;

  // Relative input paths are resolved against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  nlohmann::json to_json() const;
};

PipelineConfig load_pipeline_config(const std::string& path);

// The datasheet-style record of one evaluation. `body` is deterministic for
// a given config and inputs; `generated_at` is the only volatile field.
struct EvaluationReport {
  nlohmann::json body;
  std::string generated_at;

  nlohmann::json to_json() const;
  static EvaluationReport from_json(const nlohmann::json& j);
};

// ingest -> remap -> quality -> filter -> MV -> ADR -> split -> models ->
// grouping -> metrics. Input problems raise InputError, failures in a later
// stage raise StageError naming the stage.
EvaluationReport run_pipeline(const PipelineConfig& config);

// Plain-text digest of the report; every number comes from a report field.
std::string summarize(const EvaluationReport& report);

// Writes report.json and summary.txt into `dir`.
void write_report(const EvaluationReport& report, const std::string& dir);
EvaluationReport load_report(const std::string& path);

// One SVG heatmap + CSV per grouping (rows = groups labelled with their
// sizes, columns = models) and SVG + CSV histograms of WQS and ADR.
// Returns the written file names.
std::vector<std::string> emit_plots(const EvaluationReport& report, const std::string& dir);

// File-name form of a grouping label: every non-alphanumeric character becomes '_'.
std::string slug(const std::string& label);

// Histogram on [0, 1] with `bins` equal-width bins; the last bin is closed.
std::vector<std::size_t> unit_histogram(const std::vector<double>& values, std::size_t bins);

std::string sha256_file(const std::string& path);

}  // namespace crowdbias

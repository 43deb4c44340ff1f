#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crowdbias/error.hpp"

namespace crowdbias {

// Category used for a worker attribute that is declared but not provided.
inline constexpr std::string_view kUnknownCategory = "unknown";

enum class AttributeRole { kProtected, kSimilarity, kRepresentativeness };

std::string_view to_string(AttributeRole role);

// Ordered label scale, e.g. -2..2 with "very toxic" .. "very healthy".
struct ScaleSpec {
  std::vector<int> values;
  std::vector<std::string> anchors;
  bool lower_is_more_toxic = true;

  // Throws InputError unless values are strictly increasing, there are at
  // least two of them, and anchors (when given) match one-to-one.
  void validate() const;

  bool contains(int value) const;
  std::optional<std::size_t> index_of(int value) const;
  std::size_t size() const { return values.size(); }
  std::string anchor(std::size_t index) const;

  // Position of `value` counted from the most toxic end of the scale.
  std::size_t toxicity_rank(int value) const;

  bool operator==(const ScaleSpec&) const = default;
};

// Worker attributes grouped by the role they play in an evaluation.
struct AttributeSchema {
  std::vector<std::string> protected_attributes;
  std::vector<std::string> similarity;
  std::vector<std::string> representativeness;

  // All declared attributes: protected first, then similarity, then
  // representativeness.
  std::vector<std::string> names() const;
  std::optional<AttributeRole> role(std::string_view name) const;
  void validate() const;

  bool operator==(const AttributeSchema&) const = default;
};

struct Sample {
  std::string sample_id;
  std::string text;
  std::string source;

  bool operator==(const Sample&) const = default;
};

struct Worker {
  std::string worker_id;
  std::map<std::string, std::string> attributes;

  // Value of `name`, or "unknown" when absent.
  const std::string& attribute(const std::string& name) const;

  bool operator==(const Worker&) const = default;
};

struct Annotation {
  std::string sample_id;
  std::string worker_id;
  int label = 0;

  bool operator==(const Annotation&) const = default;
};

// The (samples, annotations, workers) triple. Immutable once built; the
// constructor enforces referential integrity, id uniqueness, scale
// membership and the attribute schema, and fills undeclared-but-missing
// attributes with "unknown".
class Dataset {
 public:
  Dataset(std::vector<Sample> samples, std::vector<Worker> workers,
          std::vector<Annotation> annotations, ScaleSpec scale,
          AttributeSchema schema);

  std::size_t n() const { return samples_.size(); }
  std::size_t f() const { return workers_.size(); }
  std::size_t l() const { return annotations_.size(); }

  const std::vector<Sample>& samples() const { return samples_; }
  const std::vector<Worker>& workers() const { return workers_; }
  const std::vector<Annotation>& annotations() const { return annotations_; }
  const ScaleSpec& scale() const { return scale_; }
  const AttributeSchema& schema() const { return schema_; }

  std::optional<std::size_t> sample_index(std::string_view id) const;
  std::optional<std::size_t> worker_index(std::string_view id) const;

  // Annotation indices per sample / per worker, in input order.
  const std::vector<std::size_t>& sample_annotations(std::size_t sample) const {
    return by_sample_[sample];
  }
  const std::vector<std::size_t>& worker_annotations(std::size_t worker) const {
    return by_worker_[worker];
  }
  std::size_t annotation_sample(std::size_t annotation) const {
    return ann_sample_[annotation];
  }
  std::size_t annotation_worker(std::size_t annotation) const {
    return ann_worker_[annotation];
  }

  // Label given by `worker_id` to `sample_id`, if any.
  std::optional<int> label_of(std::string_view sample_id,
                              std::string_view worker_id) const;

  bool operator==(const Dataset& other) const;

 private:
  std::vector<Sample> samples_;
  std::vector<Worker> workers_;
  std::vector<Annotation> annotations_;
  ScaleSpec scale_;
  AttributeSchema schema_;

  std::unordered_map<std::string, std::size_t> sample_ids_;
  std::unordered_map<std::string, std::size_t> worker_ids_;
  std::vector<std::vector<std::size_t>> by_sample_;
  std::vector<std::vector<std::size_t>> by_worker_;
  std::vector<std::size_t> ann_sample_;
  std::vector<std::size_t> ann_worker_;
};

// Contents of dataset.json: the scale and the attribute roles.
struct DatasetConfig {
  ScaleSpec scale;
  AttributeSchema schema;
  std::size_t min_count = 5;
};

DatasetConfig load_dataset_config(const std::string& path);
void save_dataset_config(const DatasetConfig& config, const std::string& path);

struct DatasetPaths {
  std::string annotations;
  std::string workers;
  std::string samples;
  std::string config;

  // annotations.csv, workers.csv, samples.csv, dataset.json under `dir`.
  static DatasetPaths in_directory(const std::string& dir);
};

struct RowIssue {
  std::string file;
  std::size_t line = 0;
  std::string field;
  std::string message;

  std::string to_string() const;
};

// Raised when input rows are invalid; carries every offending row.
class DatasetError : public InputError {
 public:
  explicit DatasetError(std::vector<RowIssue> issues);
  const std::vector<RowIssue>& issues() const { return issues_; }

 private:
  std::vector<RowIssue> issues_;
};

struct LoadOptions {
  // Drop invalid rows and report them instead of failing.
  bool drop_invalid_rows = false;
};

struct LoadResult {
  Dataset dataset;
  std::vector<RowIssue> warnings;  // e.g. re-annotations replaced
  std::vector<RowIssue> rejected;  // only with drop_invalid_rows
};

LoadResult load_dataset(const std::string& annotations_path,
                        const std::string& workers_path,
                        const std::string& samples_path,
                        const DatasetConfig& config,
                        const LoadOptions& options = {});

LoadResult load_dataset(const DatasetPaths& paths,
                        const LoadOptions& options = {});

// Writes the three CSV files plus dataset.json into `dir` (created).
void save_dataset(const Dataset& dataset, const std::string& dir,
                  std::size_t min_count = 5);

struct CategoryCount {
  std::string category;
  std::size_t workers = 0;
  std::size_t annotations = 0;
  bool under_represented = false;
};

struct AxisDistribution {
  // One attribute, or several for a cross-product axis.
  std::vector<std::string> attributes;
  std::vector<CategoryCount> categories;
};

struct DistributionReport {
  std::vector<AxisDistribution> axes;
  std::optional<AxisDistribution> cross;
  std::size_t min_count = 5;
};

// Cross-product key, e.g. "female|18-30".
std::string category_key(const Worker& worker,
                         const std::vector<std::string>& attributes);

DistributionReport distribution_report(const Dataset& dataset,
                                       const std::vector<std::string>& axes,
                                       std::size_t min_count = 5);

// Label counts for every scale value (zero-filled), ordered by the scale.
std::map<int, std::size_t> label_distribution(const Dataset& dataset);

// Keeps only the listed samples and their annotations. All workers stay,
// including those left without annotations.
Dataset restrict_to_samples(const Dataset& dataset,
                            const std::vector<std::string>& sample_ids);

}  // namespace crowdbias

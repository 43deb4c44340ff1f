#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "crowdbias/aggregation.hpp"
#include "crowdbias/dataset.hpp"
#include "crowdbias/models.hpp"

namespace crowdbias {

struct AdrEntry {
  double adr = 0.0;  // fraction of labels differing from the sample's MV
  std::size_t annotations = 0;
};

struct AdrTable {
  std::map<std::string, AdrEntry> workers;
  std::vector<std::string> excluded;  // workers without annotations
};

// Average disagreement rate of every worker with the majority vote.
AdrTable adr(const Dataset& dataset, const AggregatedLabels& mv);

// One attribute, or a cross-product when several are listed.
struct AttributeGrouping {
  std::vector<std::string> attributes;
};

// Equal-width bins over [lo, hi]; no range means the observed ADR range.
struct AdrBinning {
  std::size_t bins = 5;
  std::optional<std::pair<double, double>> range;
};

struct GroupingSpec {
  std::variant<AttributeGrouping, AdrBinning> mode;
  std::size_t min_group_size = 5;

  // "adr:5" (observed range), "adr:5:0:1", "attr:gender",
  // "attr:gender*age_group" (cross-product).
  static GroupingSpec parse(std::string_view text, std::size_t min_group_size = 5);
  std::string label() const;
  bool is_adr() const { return std::holds_alternative<AdrBinning>(mode); }
  void validate() const;
};

struct Group {
  std::string label;
  std::vector<std::string> members;
  bool undersized = false;
  std::optional<std::pair<double, double>> range;  // ADR bins only
};

// A partition of the eligible workers. Empty groups are not listed.
struct WorkerPartition {
  GroupingSpec spec;
  std::vector<Group> groups;
  std::optional<std::pair<double, double>> range_used;
  std::vector<std::string> warnings;
};

// ADR bins are right-open except the last one; ADR outside the range is
// clamped into the boundary bins with a warning. Attribute groupings cover
// every worker with at least one annotation. Throws InputError on an unknown
// attribute, a missing ADR table in ADR mode, or no eligible worker.
WorkerPartition group_workers(const Dataset& dataset, const AdrTable* adr_table,
                              const GroupingSpec& spec);

// Per-worker score from that worker's (predicted, actual) label pairs.
using PerformanceMetric =
    std::function<double(std::span<const int> predicted, std::span<const int> actual)>;

double accuracy(std::span<const int> predicted, std::span<const int> actual);

// Performance of `model` against each worker's own annotations in `dataset`.
// Workers without annotations are absent from the result.
std::map<std::string, double> per_worker_performance(
    const Dataset& dataset, const Predictor& model,
    const PerformanceMetric& metric = accuracy);

struct GroupPerformance {
  std::string label;
  std::vector<std::string> members;   // members with a performance value
  std::vector<double> performances;   // aligned with members
  std::size_t size = 0;               // members in the partition
  double mean = 0.0;
  bool undersized = false;
};

struct GroupReport {
  std::string grouping;
  std::vector<GroupPerformance> groups;
  std::vector<std::string> excluded_groups;    // no member had a performance
  std::vector<std::string> unscored_workers;   // members without performance
};

GroupReport make_group_report(const WorkerPartition& partition,
                              const std::map<std::string, double>& performance);

struct BiasResult {
  double disp = 0.0;  // 1 - population stddev of group means
  double perf = 0.0;  // unweighted mean of group means
  std::vector<std::string> group_labels;
  std::vector<double> group_means;
  std::vector<std::size_t> group_sizes;
  std::string grouping;
};

// Throws InputError with fewer than two groups.
BiasResult bias_metric(const GroupReport& groups);

struct GroupMatrix {
  std::string grouping;
  std::vector<std::string> group_labels;
  std::vector<std::size_t> group_sizes;
  std::vector<std::string> models;
  // values[group][model]; NaN where no member of the group was scored.
  std::vector<std::vector<double>> values;
};

struct ModelPerformance {
  std::string name;
  std::map<std::string, double> per_worker;
};

GroupMatrix group_matrix(const WorkerPartition& partition,
                         const std::vector<ModelPerformance>& models);

struct NamedPredictor {
  std::string name;
  const Predictor* predictor;
};

// Evaluates every predictor on `dataset` and fills the matrix.
GroupMatrix group_matrix(const Dataset& dataset, const WorkerPartition& partition,
                         const std::vector<NamedPredictor>& predictors);

// group,size,<model...> rows; NaN cells are written empty.
std::string matrix_csv(const GroupMatrix& matrix);

}  // namespace crowdbias

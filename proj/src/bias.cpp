#include "crowdbias/bias.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "crowdbias/csv.hpp"
#include "crowdbias/error.hpp"

namespace crowdbias {

namespace {

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<std::string> split(std::string_view text, char separator) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = text.find(separator, start);
    parts.emplace_back(text.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double parse_double(const std::string& text, std::string_view context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("invalid number '" + text + "' in " + std::string(context));
}

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace

AdrTable adr(const Dataset& dataset, const AggregatedLabels& mv) {
  if (mv.votes.size() != dataset.n()) {
    throw InputError("majority vote does not belong to this dataset");
  }
  AdrTable table;
  for (std::size_t w = 0; w < dataset.f(); ++w) {
    const auto& id = dataset.workers()[w].worker_id;
    const auto& indices = dataset.worker_annotations(w);
    if (indices.empty()) {
      table.excluded.push_back(id);
      continue;
    }
    std::size_t differing = 0;
    for (std::size_t a : indices) {
      if (dataset.annotations()[a].label != mv.label_at(dataset.annotation_sample(a))) {
        ++differing;
      }
    }
    table.workers[id] = {static_cast<double>(differing) / static_cast<double>(indices.size()),
                         indices.size()};
  }
  return table;
}

GroupingSpec GroupingSpec::parse(std::string_view text, std::size_t min_group_size) {
  const auto parts = split(text, ':');
  GroupingSpec spec;
  spec.min_group_size = min_group_size;
  if (parts[0] == "adr") {
    AdrBinning binning;
    if (parts.size() >= 2) {
      binning.bins = static_cast<std::size_t>(parse_double(parts[1], text));
    }
    if (parts.size() == 4) {
      binning.range = {parse_double(parts[2], text), parse_double(parts[3], text)};
    } else if (parts.size() == 3 && parts[2] != "observed") {
      throw InputError("expected adr:<bins>[:<lo>:<hi>|:observed], got '" +
                       std::string(text) + "'");
    } else if (parts.size() > 4) {
      throw InputError("too many fields in grouping '" + std::string(text) + "'");
    }
    spec.mode = binning;
  } else if (parts[0] == "attr" && parts.size() == 2 && !parts[1].empty()) {
    spec.mode = AttributeGrouping{split(parts[1], '*')};
  } else {
    throw InputError("unknown grouping '" + std::string(text) +
                     "' (expected adr:<bins>[:<lo>:<hi>] or attr:<name>[*<name>...])");
  }
  spec.validate();
  return spec;
}

std::string GroupingSpec::label() const {
  if (const auto* binning = std::get_if<AdrBinning>(&mode)) {
    std::string out = "adr:" + std::to_string(binning->bins);
    if (binning->range) {
      out += ":" + short_number(binning->range->first) + ":" +
             short_number(binning->range->second);
    } else {
      out += ":observed";
    }
    return out;
  }
  const auto& attributes = std::get<AttributeGrouping>(mode).attributes;
  std::string out = "attr:";
  for (std::size_t i = 0; i < attributes.size(); ++i) {
    if (i > 0) out += "*";
    out += attributes[i];
  }
  return out;
}

void GroupingSpec::validate() const {
  if (const auto* binning = std::get_if<AdrBinning>(&mode)) {
    if (binning->bins < 2) throw InputError("ADR grouping needs at least 2 bins");
    if (binning->range) {
      const auto [lo, hi] = *binning->range;
      if (!(lo >= 0.0 && hi <= 1.0 && lo < hi)) {
        throw InputError("ADR range must satisfy 0 <= lo < hi <= 1");
      }
    }
    return;
  }
  const auto& attributes = std::get<AttributeGrouping>(mode).attributes;
  if (attributes.empty()) throw InputError("attribute grouping needs an attribute");
  for (const auto& a : attributes) {
    if (a.empty()) throw InputError("empty attribute name in grouping");
  }
}

WorkerPartition group_workers(const Dataset& dataset, const AdrTable* adr_table,
                              const GroupingSpec& spec) {
  spec.validate();
  WorkerPartition partition;
  partition.spec = spec;

  if (const auto* binning = std::get_if<AdrBinning>(&spec.mode)) {
    if (adr_table == nullptr) throw InputError("ADR grouping needs an ADR table");
    if (adr_table->workers.empty()) throw InputError("no worker has an ADR value");
    double lo = 0.0;
    double hi = 0.0;
    if (binning->range) {
      std::tie(lo, hi) = *binning->range;
    } else {
      lo = std::numeric_limits<double>::infinity();
      hi = -lo;
      for (const auto& [id, entry] : adr_table->workers) {
        lo = std::min(lo, entry.adr);
        hi = std::max(hi, entry.adr);
      }
    }
    partition.range_used = {lo, hi};
    const std::size_t bins = binning->bins;
    std::vector<Group> groups(bins);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
      const double from = lo + width * static_cast<double>(b);
      const double to = b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1);
      groups[b].range = {from, to};
      groups[b].label = "[" + short_number(from) + "," + short_number(to) +
                        (b + 1 == bins ? "]" : ")");
    }
    std::size_t clamped = 0;
    for (const auto& [id, entry] : adr_table->workers) {
      std::size_t bin = 0;
      if (hi > lo) {
        const double position = (entry.adr - lo) / (hi - lo) * static_cast<double>(bins);
        if (entry.adr < lo || entry.adr > hi) ++clamped;
        if (position <= 0.0) {
          bin = 0;
        } else if (position >= static_cast<double>(bins)) {
          bin = bins - 1;
        } else {
          bin = static_cast<std::size_t>(std::floor(position));
        }
      } else if (entry.adr != lo) {
        ++clamped;
      }
      groups[bin].members.push_back(id);
    }
    if (hi <= lo) {
      partition.warnings.push_back("degenerate ADR range; all workers share one bin");
    }
    if (clamped > 0) {
      partition.warnings.push_back(std::to_string(clamped) +
                                   " worker(s) outside the ADR range clamped into "
                                   "the boundary bins");
    }
    for (auto& g : groups) {
      if (g.members.empty()) continue;
      g.undersized = g.members.size() < spec.min_group_size;
      partition.groups.push_back(std::move(g));
    }
  } else {
    const auto& attributes = std::get<AttributeGrouping>(spec.mode).attributes;
    for (const auto& a : attributes) {
      if (!dataset.schema().role(a)) throw InputError("unknown attribute '" + a + "'");
    }
    std::map<std::string, Group> groups;
    for (std::size_t w = 0; w < dataset.f(); ++w) {
      if (dataset.worker_annotations(w).empty()) continue;
      const auto& worker = dataset.workers()[w];
      const auto key = category_key(worker, attributes);
      auto& g = groups[key];
      g.label = key;
      g.members.push_back(worker.worker_id);
    }
    for (auto& [key, g] : groups) {
      g.undersized = g.members.size() < spec.min_group_size;
      partition.groups.push_back(std::move(g));
    }
  }
  if (partition.groups.empty()) throw InputError("grouping produced an empty partition");
  for (const auto& g : partition.groups) {
    if (g.undersized) {
      partition.warnings.push_back("group " + g.label + " has " +
                                   std::to_string(g.members.size()) +
                                   " worker(s), below the minimum of " +
                                   std::to_string(spec.min_group_size));
    }
  }
  return partition;
}

double accuracy(std::span<const int> predicted, std::span<const int> actual) {
  if (predicted.size() != actual.size() || actual.empty()) {
    throw InputError("accuracy needs equal, non-empty sequences");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) correct += predicted[i] == actual[i];
  return static_cast<double>(correct) / static_cast<double>(actual.size());
}

std::map<std::string, double> per_worker_performance(const Dataset& dataset,
                                                     const Predictor& model,
                                                     const PerformanceMetric& metric) {
  std::map<std::string, double> result;
  std::vector<int> predicted;
  std::vector<int> actual;
  for (std::size_t w = 0; w < dataset.f(); ++w) {
    const auto& indices = dataset.worker_annotations(w);
    if (indices.empty()) continue;
    const auto& worker = dataset.workers()[w];
    predicted.clear();
    actual.clear();
    for (std::size_t a : indices) {
      const auto& sample = dataset.samples()[dataset.annotation_sample(a)];
      try {
        predicted.push_back(model.predict(sample, worker));
      } catch (const Error& e) {
        throw ComputeError("prediction failed for worker '" + worker.worker_id +
                           "' on sample '" + sample.sample_id + "': " + e.what());
      }
      actual.push_back(dataset.annotations()[a].label);
    }
    result[worker.worker_id] = metric(predicted, actual);
  }
  return result;
}

GroupReport make_group_report(const WorkerPartition& partition,
                              const std::map<std::string, double>& performance) {
  GroupReport report;
  report.grouping = partition.spec.label();
  for (const auto& group : partition.groups) {
    GroupPerformance gp;
    gp.label = group.label;
    gp.size = group.members.size();
    gp.undersized = group.undersized;
    for (const auto& id : group.members) {
      const auto it = performance.find(id);
      if (it == performance.end()) {
        report.unscored_workers.push_back(id);
        continue;
      }
      gp.members.push_back(id);
      gp.performances.push_back(it->second);
    }
    if (gp.performances.empty()) {
      report.excluded_groups.push_back(group.label);
      continue;
    }
    gp.mean = mean_of(gp.performances);
    report.groups.push_back(std::move(gp));
  }
  return report;
}

BiasResult bias_metric(const GroupReport& groups) {
  if (groups.groups.size() < 2) {
    throw InputError("bias metric needs at least two non-empty groups, got " +
                     std::to_string(groups.groups.size()));
  }
  BiasResult result;
  result.grouping = groups.grouping;
  for (const auto& g : groups.groups) {
    if (g.performances.empty()) throw InputError("group " + g.label + " has no member");
    result.group_labels.push_back(g.label);
    result.group_means.push_back(g.mean);
    result.group_sizes.push_back(g.size);
  }
  const double mean = mean_of(result.group_means);
  double variance = 0.0;
  for (double m : result.group_means) variance += (m - mean) * (m - mean);
  variance /= static_cast<double>(result.group_means.size());
  result.perf = mean;
  result.disp = 1.0 - std::sqrt(variance);
  return result;
}

GroupMatrix group_matrix(const WorkerPartition& partition,
                         const std::vector<ModelPerformance>& models) {
  GroupMatrix matrix;
  matrix.grouping = partition.spec.label();
  for (const auto& m : models) matrix.models.push_back(m.name);
  for (const auto& group : partition.groups) {
    matrix.group_labels.push_back(group.label);
    matrix.group_sizes.push_back(group.members.size());
    std::vector<double> row;
    for (const auto& m : models) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& id : group.members) {
        const auto it = m.per_worker.find(id);
        if (it == m.per_worker.end()) continue;
        sum += it->second;
        ++count;
      }
      row.push_back(count > 0 ? sum / static_cast<double>(count)
                              : std::numeric_limits<double>::quiet_NaN());
    }
    matrix.values.push_back(std::move(row));
  }
  return matrix;
}

GroupMatrix group_matrix(const Dataset& dataset, const WorkerPartition& partition,
                         const std::vector<NamedPredictor>& predictors) {
  std::vector<ModelPerformance> models;
  for (const auto& p : predictors) {
    models.push_back({p.name, per_worker_performance(dataset, *p.predictor)});
  }
  return group_matrix(partition, models);
}

std::string matrix_csv(const GroupMatrix& matrix) {
  std::ostringstream out;
  std::vector<std::string> header{"group", "size"};
  header.insert(header.end(), matrix.models.begin(), matrix.models.end());
  csv::write_row(out, header);
  for (std::size_t g = 0; g < matrix.group_labels.size(); ++g) {
    std::vector<std::string> row{matrix.group_labels[g],
                                 std::to_string(matrix.group_sizes[g])};
    for (double v : matrix.values[g]) {
      if (std::isnan(v)) {
        row.emplace_back();
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        row.emplace_back(buf);
      }
    }
    csv::write_row(out, row);
  }
  return out.str();
}

}  // namespace crowdbias

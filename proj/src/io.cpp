#include "crowdbias/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "crowdbias/csv.hpp"
#include "crowdbias/error.hpp"

namespace crowdbias {

using nlohmann::json;

namespace {

json range_json(const std::optional<std::pair<double, double>>& range) {
  if (!range) return nullptr;
  return json::array({range->first, range->second});
}

json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

json to_json(const QualityScores& scores) {
  json aqs = json::object();
  for (const auto& [label, value] : scores.aqs) aqs[std::to_string(label)] = value;
  return {{"uqs", scores.uqs},
          {"wqs", scores.wqs},
          {"aqs", aqs},
          {"iterations", scores.iterations},
          {"converged", scores.converged},
          {"skipped_units", scores.skipped_units},
          {"warnings", scores.warnings}};
}

QualityScores quality_from_json(const json& j) {
  QualityScores scores;
  try {
    scores.uqs = j.at("uqs").get<std::map<std::string, double>>();
    scores.wqs = j.at("wqs").get<std::map<std::string, double>>();
    for (const auto& [label, value] : j.at("aqs").items()) {
      scores.aqs[std::stoi(label)] = value.get<double>();
    }
    scores.iterations = j.value("iterations", 0);
    scores.converged = j.value("converged", false);
    scores.skipped_units = j.value("skipped_units", std::vector<std::string>{});
    scores.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const std::exception& e) {
    throw InputError(std::string("invalid scores file: ") + e.what());
  }
  return scores;
}

json to_json(const DistributionReport& report) {
  auto axis_json = [](const AxisDistribution& axis) {
    json categories = json::array();
    for (const auto& c : axis.categories) {
      categories.push_back({{"category", c.category},
                            {"workers", c.workers},
                            {"annotations", c.annotations},
                            {"under_represented", c.under_represented}});
    }
    return json{{"attributes", axis.attributes}, {"categories", categories}};
  };
  json j{{"min_count", report.min_count}, {"axes", json::array()}};
  for (const auto& axis : report.axes) j["axes"].push_back(axis_json(axis));
  j["cross"] = report.cross ? axis_json(*report.cross) : json(nullptr);
  return j;
}

json to_json(const BiasResult& result) {
  return {{"grouping", result.grouping},
          {"disp", result.disp},
          {"perf", result.perf},
          {"group_labels", result.group_labels},
          {"group_means", result.group_means},
          {"group_sizes", result.group_sizes}};
}

json to_json(const WorkerPartition& partition) {
  json groups = json::array();
  for (const auto& g : partition.groups) {
    groups.push_back({{"label", g.label},
                      {"size", g.members.size()},
                      {"undersized", g.undersized},
                      {"range", range_json(g.range)},
                      {"members", g.members}});
  }
  return {{"grouping", partition.spec.label()},
          {"min_group_size", partition.spec.min_group_size},
          {"range_used", range_json(partition.range_used)},
          {"groups", groups},
          {"warnings", partition.warnings}};
}

json to_json(const GroupMatrix& matrix) {
  json values = json::array();
  for (const auto& row : matrix.values) {
    json r = json::array();
    for (double v : row) r.push_back(number_or_null(v));
    values.push_back(r);
  }
  return {{"grouping", matrix.grouping},
          {"groups", matrix.group_labels},
          {"sizes", matrix.group_sizes},
          {"models", matrix.models},
          {"values", values}};
}

json to_json(const ValidationReport& report) {
  return {{"mse_wqs", report.mse_wqs ? json(*report.mse_wqs) : json(nullptr)},
          {"auroc_uqs", report.auroc_uqs ? json(*report.auroc_uqs) : json(nullptr)},
          {"n_workers", report.n_workers},
          {"n_units", report.n_units},
          {"unresolved_workers", report.unresolved_workers},
          {"unresolved_units", report.unresolved_units},
          {"auroc_orientation", "AUROC of (1 - UQS) against ambiguity = 1"},
          {"notes", report.notes}};
}

json to_json(const AdrTable& table) {
  json workers = json::object();
  for (const auto& [id, entry] : table.workers) {
    workers[id] = {{"adr", entry.adr}, {"annotations", entry.annotations}};
  }
  return {{"workers", workers}, {"excluded", table.excluded}};
}

std::string majority_vote_csv(const AggregatedLabels& labels) {
  std::ostringstream out;
  csv::write_row(out, {"sample_id", "mv_label", "tie", "counts_json"});
  for (const auto& v : labels.votes) {
    json counts = json::object();
    for (const auto& [label, count] : v.counts) counts[std::to_string(label)] = count;
    csv::write_row(out, {v.sample_id, std::to_string(v.label), v.tie ? "true" : "false",
                         counts.dump()});
  }
  return out.str();
}

std::string removed_workers_csv(const std::vector<RemovedWorker>& removed) {
  std::ostringstream out;
  csv::write_row(out, {"worker_id", "wqs", "annotations"});
  for (const auto& r : removed) {
    csv::write_row(out, {r.worker_id, format_number(r.wqs), std::to_string(r.annotations)});
  }
  return out.str();
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::string& path) {
  write_text_file(j.dump(2) + "\n", path);
}

void write_text_file(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("failed writing " + path);
}

std::string format_number(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

}  // namespace crowdbias

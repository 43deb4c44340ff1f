#include "crowdbias/report.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "crowdbias/aggregation.hpp"
#include "crowdbias/bias.hpp"
#include "crowdbias/io.hpp"

namespace crowdbias {

using nlohmann::json;

namespace {

std::string resolve(const std::string& path, const std::string& base_dir) {
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return p.string();
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

template <typename F>
auto run_stage(const char* name, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

json label_histogram_json(const Dataset& d) {
  json j = json::object();
  for (const auto& [label, count] : label_distribution(d)) j[std::to_string(label)] = count;
  return j;
}

json dataset_stats(const Dataset& d) {
  return {{"n_samples", d.n()},
          {"n_workers", d.f()},
          {"n_annotations", d.l()},
          {"scale", d.scale().values},
          {"label_distribution", label_histogram_json(d)}};
}

json train_config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"l2", c.l2},                       {"batch_size", c.batch_size},
          {"seed", c.seed},                   {"hash_dim", c.hash_dim}};
}

json histogram_json(const std::vector<double>& values, std::size_t bins) {
  const auto counts = unit_histogram(values, bins);
  json edges = json::array();
  for (std::size_t b = 0; b <= bins; ++b) {
    edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
  }
  return {{"edges", edges}, {"counts", counts}};
}

// Category counts of every declared attribute among the group members.
json composition_json(const Dataset& d, const std::vector<std::string>& members) {
  json j = json::object();
  for (const auto& name : d.schema().names()) {
    std::map<std::string, std::size_t> counts;
    for (const auto& id : members) {
      const auto w = d.worker_index(id);
      if (w) ++counts[d.workers()[*w].attribute(name)];
    }
    j[name] = counts;
  }
  return j;
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

// White (0) to dark blue (1).
std::string heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 - 222 * v));
  const int g = static_cast<int>(std::lround(255 - 153 * v));
  const int b = static_cast<int>(std::lround(255 - 75 * v));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string heatmap_svg(const json& matrix, const std::string& title) {
  const auto& groups = matrix.at("groups");
  const auto& models = matrix.at("models");
  const auto& sizes = matrix.at("sizes");
  const auto& values = matrix.at("values");
  const int label_width = 220;
  const int cell_w = 100;
  const int cell_h = 28;
  const int top = 56;
  const int width = label_width + cell_w * static_cast<int>(models.size()) + 20;
  const int height = top + cell_h * static_cast<int>(groups.size()) + 20;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<text x=\"10\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  for (std::size_t m = 0; m < models.size(); ++m) {
    svg << "<text x=\"" << label_width + cell_w * static_cast<int>(m) + cell_w / 2
        << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">"
        << xml_escape(models[m].get<std::string>()) << "</text>\n";
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const int y = top + cell_h * static_cast<int>(g);
    svg << "<text x=\"" << label_width - 8 << "\" y=\"" << y + cell_h / 2 + 4
        << "\" text-anchor=\"end\">" << xml_escape(groups[g].get<std::string>())
        << " (n=" << sizes[g].get<std::size_t>() << ")</text>\n";
    for (std::size_t m = 0; m < models.size(); ++m) {
      const int x = label_width + cell_w * static_cast<int>(m);
      const auto& cell = values[g][m];
      const std::string fill = cell.is_null() ? "#dddddd" : heat_color(cell.get<double>());
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w
          << "\" height=\"" << cell_h << "\" fill=\"" << fill
          << "\" stroke=\"#ffffff\"/>\n";
      const std::string text = cell.is_null() ? "n/a" : format_number(cell.get<double>(), 3);
      const bool dark = !cell.is_null() && cell.get<double>() > 0.6;
      svg << "<text x=\"" << x + cell_w / 2 << "\" y=\"" << y + cell_h / 2 + 4
          << "\" text-anchor=\"middle\" fill=\"" << (dark ? "#ffffff" : "#000000") << "\">"
          << text << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string histogram_svg(const json& histogram, const std::string& title) {
  const auto& counts = histogram.at("counts");
  const auto& edges = histogram.at("edges");
  std::size_t peak = 1;
  for (const auto& c : counts) peak = std::max(peak, c.get<std::size_t>());
  const int bar_w = 24;
  const int plot_h = 200;
  const int left = 50;
  const int top = 40;
  const int width = left + bar_w * static_cast<int>(counts.size()) + 20;
  const int height = top + plot_h + 40;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"10\" y=\"20\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
      << left + bar_w * static_cast<int>(counts.size()) << "\" y2=\"" << top + plot_h
      << "\" stroke=\"#000000\"/>\n";
  svg << "<text x=\"" << left - 6 << "\" y=\"" << top + 4 << "\" text-anchor=\"end\">" << peak
      << "</text>\n";
  for (std::size_t b = 0; b < counts.size(); ++b) {
    const auto c = counts[b].get<std::size_t>();
    const int h = static_cast<int>(std::lround(static_cast<double>(plot_h) *
                                               static_cast<double>(c) /
                                               static_cast<double>(peak)));
    const int x = left + bar_w * static_cast<int>(b);
    if (c > 0) {
      svg << "<rect x=\"" << x + 1 << "\" y=\"" << top + plot_h - h << "\" width=\""
          << bar_w - 2 << "\" height=\"" << h << "\" fill=\"#2166ac\"><title>["
          << format_number(edges[b].get<double>(), 2) << ","
          << format_number(edges[b + 1].get<double>(), 2) << "): " << c
          << "</title></rect>\n";
    }
  }
  for (std::size_t b = 0; b <= counts.size(); b += 5) {
    svg << "<text x=\"" << left + bar_w * static_cast<int>(b) << "\" y=\""
        << top + plot_h + 16 << "\" text-anchor=\"middle\">"
        << format_number(edges[b].get<double>(), 2) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string histogram_csv(const json& histogram) {
  std::ostringstream out;
  out << "bin_start,bin_end,count\n";
  const auto& counts = histogram.at("counts");
  const auto& edges = histogram.at("edges");
  for (std::size_t b = 0; b < counts.size(); ++b) {
    out << format_number(edges[b].get<double>(), 4) << ","
        << format_number(edges[b + 1].get<double>(), 4) << "," << counts[b].get<std::size_t>()
        << "\n";
  }
  return out.str();
}

std::string matrix_csv_from_json(const json& matrix) {
  GroupMatrix m;
  m.grouping = matrix.at("grouping").get<std::string>();
  m.group_labels = matrix.at("groups").get<std::vector<std::string>>();
  m.group_sizes = matrix.at("sizes").get<std::vector<std::size_t>>();
  m.models = matrix.at("models").get<std::vector<std::string>>();
  for (const auto& row : matrix.at("values")) {
    std::vector<double> r;
    for (const auto& v : row) {
      r.push_back(v.is_null() ? std::nan("") : v.get<double>());
    }
    m.values.push_back(std::move(r));
  }
  return matrix_csv(m);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::string& base_dir) {
  PipelineConfig c;
  try {
    if (j.contains("data") && !j.at("data").is_null()) {
      const auto& d = j.at("data");
      if (d.is_string()) {
        c.data = DatasetPaths::in_directory(resolve(d.get<std::string>(), base_dir));
      } else {
        c.data = DatasetPaths{resolve(d.at("annotations").get<std::string>(), base_dir),
                              resolve(d.at("workers").get<std::string>(), base_dir),
                              resolve(d.at("samples").get<std::string>(), base_dir),
                              resolve(d.at("config").get<std::string>(), base_dir)};
      }
    }
    if (j.contains("simulate") && !j.at("simulate").is_null()) {
      const auto& s = j.at("simulate");
      if (s.contains("preset")) {
        const auto name = s.at("preset").get<std::string>();
        const std::uint64_t seed = s.value("seed", std::uint64_t{42});
        if (name == "polarized") {
          c.simulate = presets::polarized(seed);
        } else if (name == "spammer_separation") {
          c.simulate = presets::spammer_separation(seed);
        } else if (name == "three_kinds") {
          c.simulate = presets::three_kinds(seed);
        } else {
          throw InputError("unknown simulator preset '" + name + "'");
        }
      } else {
        c.simulate = CrowdProfile::from_json(s);
      }
    }
    c.setup = j.value("setup", c.setup);
    if (j.contains("quality")) {
      const auto& q = j.at("quality");
      c.run_quality = q.value("enabled", c.run_quality);
      c.quality.tol = q.value("tol", c.quality.tol);
      c.quality.max_iter = q.value("max_iter", c.quality.max_iter);
    }
    if (j.contains("filter")) {
      c.wqs_threshold = j.at("filter").value("wqs_threshold", c.wqs_threshold);
      c.force_filter = j.at("filter").value("force", c.force_filter);
    }
    c.groupings = j.value("groupings", c.groupings);
    c.models = j.value("models", c.models);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.l2 = t.value("l2", c.train.l2);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.hash_dim = t.value("hash_dim", c.train.hash_dim);
    }
    if (j.contains("split")) {
      c.eval_fraction = j.at("split").value("eval_fraction", c.eval_fraction);
      c.split_seed = j.at("split").value("seed", c.split_seed);
    }
    c.min_group_size = j.value("min_group_size", c.min_group_size);
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
    c.target_distribution = j.value("target_distribution", c.target_distribution);
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid pipeline config: ") + e.what());
  }
  if (c.data.has_value() == c.simulate.has_value()) {
    throw InputError("pipeline config needs exactly one of 'data' and 'simulate'");
  }
  if (c.setup < 0 || c.setup > 4) throw InputError("setup must be 0 (auto) or 1-4");
  if (c.histogram_bins == 0) throw InputError("histogram_bins must be positive");
  for (const auto& g : c.groupings) GroupingSpec::parse(g, c.min_group_size);
  for (const auto& m : c.models) parse_model_kind(m);
  return c;
}

json PipelineConfig::to_json() const {
  json j;
  if (data) {
    j["data"] = {{"annotations", data->annotations},
                 {"workers", data->workers},
                 {"samples", data->samples},
                 {"config", data->config}};
  } else {
    j["data"] = nullptr;
  }
  j["simulate"] = simulate ? simulate->to_json() : json(nullptr);
  j["setup"] = setup;
  j["quality"] = {{"enabled", run_quality}, {"tol", quality.tol}, {"max_iter", quality.max_iter}};
  j["filter"] = {{"wqs_threshold", wqs_threshold}, {"force", force_filter}};
  j["groupings"] = groupings;
  j["models"] = models;
  j["train"] = train_config_json(train);
  j["split"] = {{"eval_fraction", eval_fraction}, {"seed", split_seed}};
  j["min_group_size"] = min_group_size;
  j["histogram_bins"] = histogram_bins;
  j["target_distribution"] = target_distribution;
  return j;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  const auto base = std::filesystem::path(path).parent_path().string();
  return PipelineConfig::from_json(read_json_file(path), base);
}

json EvaluationReport::to_json() const {
  return {{"body", body}, {"generated_at", generated_at}};
}

EvaluationReport EvaluationReport::from_json(const json& j) {
  EvaluationReport r;
  try {
    r.body = j.at("body");
    r.generated_at = j.value("generated_at", std::string());
    const int version = r.body.at("schema_version").get<int>();
    if (version != kReportSchemaVersion) {
      throw InputError("unsupported report schema version " + std::to_string(version));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("invalid report: ") + e.what());
  }
  return r;
}

EvaluationReport run_pipeline(const PipelineConfig& config) {
  json body;
  body["schema_version"] = kReportSchemaVersion;
  body["tool"] = {{"name", "crowdbias"}, {"version", kToolVersion}};
  body["config"] = config.to_json();
  body["metric_definitions"] = {
      {"performance", "per-worker accuracy of the model against that worker's own labels, "
                      "on held-out samples"},
      {"group_mean", "arithmetic mean of member performances"},
      {"disp", "1 - population standard deviation of the group means"},
      {"perf", "unweighted mean of the group means (groups count equally)"},
      {"adr", "fraction of a worker's labels that differ from the sample majority vote"},
      {"majority_vote_ties", "broken toward the more toxic label"}};
  json skipped = json::array();

  // ingest
  std::optional<Dataset> raw_holder;
  if (config.data) {
    auto loaded = load_dataset(*config.data);
    json warnings = json::array();
    for (const auto& w : loaded.warnings) warnings.push_back(w.to_string());
    body["inputs"] = {
        {"kind", "files"},
        {"annotations", {{"path", config.data->annotations},
                         {"sha256", sha256_file(config.data->annotations)}}},
        {"workers", {{"path", config.data->workers},
                     {"sha256", sha256_file(config.data->workers)}}},
        {"samples", {{"path", config.data->samples},
                     {"sha256", sha256_file(config.data->samples)}}},
        {"config", {{"path", config.data->config},
                    {"sha256", sha256_file(config.data->config)}}},
        {"load_warnings", warnings}};
    raw_holder.emplace(std::move(loaded.dataset));
  } else {
    auto simulation = generate(*config.simulate);
    body["inputs"] = {{"kind", "simulated"}, {"profile", config.simulate->to_json()}};
    raw_holder.emplace(std::move(simulation.dataset));
  }
  const Dataset& raw = *raw_holder;
  const auto attribute_names = raw.schema().names();

  json dataset_json;
  dataset_json["raw"] = dataset_stats(raw);
  dataset_json["attribute_roles"] = {{"protected", raw.schema().protected_attributes},
                                     {"similarity", raw.schema().similarity},
                                     {"representativeness", raw.schema().representativeness}};
  dataset_json["distribution"] =
      crowdbias::to_json(distribution_report(raw, attribute_names, config.min_group_size));
  dataset_json["target_distribution"] = config.target_distribution;

  // remap
  const SetUp setup = run_stage("remap", [&] {
    return config.setup != 0 ? SetUp::from_number(config.setup)
                             : SetUp::default_for(raw.scale());
  });
  const Dataset remapped = run_stage("remap", [&] { return remap(raw, setup); });
  body["setup"] = {{"name", setup.label()}, {"mapping", setup.mapping}};
  dataset_json["remapped"] = dataset_stats(remapped);

  // quality + filter
  std::optional<QualityScores> scores;
  Dataset filtered = remapped;
  if (config.run_quality) {
    scores = run_stage("quality", [&] { return compute_quality(remapped, config.quality); });
    std::vector<double> wqs_values;
    for (const auto& [id, v] : scores->wqs) wqs_values.push_back(v);
    json aqs = json::object();
    for (const auto& [label, v] : scores->aqs) aqs[std::to_string(label)] = v;
    body["quality"] = {{"iterations", scores->iterations},
                       {"converged", scores->converged},
                       {"tol", config.quality.tol},
                       {"max_iter", config.quality.max_iter},
                       {"scored_units", scores->uqs.size()},
                       {"scored_workers", scores->wqs.size()},
                       {"skipped_units", scores->skipped_units.size()},
                       {"aqs", aqs},
                       {"wqs_histogram", histogram_json(wqs_values, config.histogram_bins)},
                       {"warnings", scores->warnings}};

    auto result = run_stage("filter", [&] {
      return filter_spammers(remapped, *scores, config.wqs_threshold, config.force_filter);
    });
    json removed = json::array();
    for (const auto& r : result.removed) {
      removed.push_back({{"worker_id", r.worker_id}, {"wqs", r.wqs}, {"annotations", r.annotations}});
    }
    body["filter"] = {{"wqs_threshold", config.wqs_threshold},
                      {"removed", removed},
                      {"removed_count", result.removed.size()},
                      {"removed_fraction",
                       remapped.f() == 0 ? 0.0
                                         : static_cast<double>(result.removed.size()) /
                                               static_cast<double>(remapped.f())}};
    filtered = std::move(result.dataset);
  } else {
    body["quality"] = nullptr;
    body["filter"] = nullptr;
    skipped.push_back("quality scoring and spammer filtering disabled");
  }

  // Samples left without annotations after filtering cannot have an MV.
  {
    std::vector<std::string> kept;
    for (std::size_t s = 0; s < filtered.n(); ++s) {
      if (!filtered.sample_annotations(s).empty()) kept.push_back(filtered.samples()[s].sample_id);
    }
    const std::size_t dropped = filtered.n() - kept.size();
    if (dropped > 0) {
      filtered = restrict_to_samples(filtered, kept);
      skipped.push_back(std::to_string(dropped) + " sample(s) without annotations dropped");
    }
  }
  dataset_json["filtered"] = dataset_stats(filtered);
  body["dataset"] = dataset_json;

  // MV + ADR
  const auto mv = run_stage("majority_vote", [&] { return majority_vote(filtered); });
  std::size_t ties = 0;
  for (const auto& v : mv.votes) ties += v.tie ? 1 : 0;
  body["majority_vote"] = {{"samples", mv.votes.size()}, {"ties", ties}, {"tie_rate", mv.tie_rate()}};

  const auto adr_table = run_stage("adr", [&] { return adr(filtered, mv); });
  {
    std::vector<double> values;
    for (const auto& [id, e] : adr_table.workers) values.push_back(e.adr);
    body["adr"] = {{"histogram", histogram_json(values, config.histogram_bins)},
                   {"excluded_workers", adr_table.excluded}};
  }

  // split + models
  const auto split = run_stage("split", [&] {
    return split_samples(filtered, mv, config.eval_fraction, config.split_seed);
  });
  const Dataset train = restrict_to_samples(filtered, split.train);
  const Dataset eval = restrict_to_samples(filtered, split.eval);
  body["split"] = {{"eval_fraction", split.eval_fraction},
                   {"seed", split.seed},
                   {"stratified_on", "majority-vote label"},
                   {"train_samples", split.train.size()},
                   {"eval_samples", split.eval.size()},
                   {"eval_annotations", eval.l()}};

  std::vector<ModelPerformance> performances;
  json models_json = json::array();
  for (const auto& name : config.models) {
    const ModelKind kind = parse_model_kind(name);
    const std::string label(to_string(kind));
    run_stage("models", [&] {
      std::optional<Predictor> predictor;
      json entry{{"name", label}};
      if (kind == ModelKind::kModel1) {
        predictor = build_model1(train, config.train);
        entry["description"] = "logistic regression on text, trained on MV labels";
        entry["train_rows"] = train.n();
      } else if (kind == ModelKind::kModel2) {
        predictor = build_model2(train, config.train);
        entry["description"] =
            "logistic regression on text + one-hot worker attributes, trained on "
            "individual labels";
        entry["train_rows"] = train.l();
      } else {
        predictor = build_model3(eval);
        entry["description"] = "oracle replaying each worker's own label";
      }
      if (const LRModel* model = predictor->model()) {
        entry["train_config"] = train_config_json(model->config);
        entry["loss_trace"] = model->loss_trace;
      }
      performances.push_back({label, per_worker_performance(eval, *predictor)});
      models_json.push_back(entry);
      return 0;
    });
  }
  body["models"] = models_json;

  // grouping + metrics
  std::vector<std::string> grouping_strings = config.groupings;
  if (grouping_strings.empty()) {
    grouping_strings.push_back("adr:5");
    for (const auto& p : raw.schema().protected_attributes) grouping_strings.push_back("attr:" + p);
    if (raw.schema().protected_attributes.empty()) {
      skipped.push_back("protected-attribute metric skipped: no protected attributes declared");
    }
  }
  json groupings_json = json::array();
  for (const auto& text : grouping_strings) {
    run_stage("grouping", [&] {
      const auto spec = GroupingSpec::parse(text, config.min_group_size);
      const auto partition = group_workers(filtered, &adr_table, spec);
      json g = crowdbias::to_json(partition);
      g["mode"] = spec.is_adr() ? "adr_bins" : "protected_attribute";
      for (std::size_t i = 0; i < partition.groups.size(); ++i) {
        g["groups"][i]["composition"] = composition_json(filtered, partition.groups[i].members);
      }
      json results = json::array();
      for (const auto& perf : performances) {
        const auto report = make_group_report(partition, perf.per_worker);
        json r{{"model", perf.name},
               {"excluded_groups", report.excluded_groups},
               {"unscored_workers", report.unscored_workers.size()}};
        if (report.groups.size() < 2) {
          r["available"] = false;
          r["reason"] = "fewer than two groups with held-out annotations";
        } else {
          const auto bias = bias_metric(report);
          r["available"] = true;
          r["disp"] = bias.disp;
          r["perf"] = bias.perf;
          r["group_labels"] = bias.group_labels;
          r["group_means"] = bias.group_means;
          r["group_sizes"] = bias.group_sizes;
          json scored = json::array();
          for (const auto& gp : report.groups) scored.push_back(gp.members.size());
          r["group_scored_workers"] = scored;
        }
        results.push_back(r);
      }
      g["results"] = results;
      g["matrix"] = crowdbias::to_json(group_matrix(partition, performances));
      groupings_json.push_back(g);
      return 0;
    });
  }
  body["groupings"] = groupings_json;

  // Per-worker intermediate scores.
  json workers = json::array();
  for (std::size_t w = 0; w < remapped.f(); ++w) {
    const auto& id = remapped.workers()[w].worker_id;
    json entry{{"worker_id", id}, {"annotations", remapped.worker_annotations(w).size()}};
    if (scores) {
      const auto it = scores->wqs.find(id);
      entry["wqs"] = it == scores->wqs.end() ? json(nullptr) : json(it->second);
    }
    const auto adr_it = adr_table.workers.find(id);
    entry["adr"] = adr_it == adr_table.workers.end() ? json(nullptr) : json(adr_it->second.adr);
    entry["filtered_out"] = !filtered.worker_index(id).has_value();
    json perf = json::object();
    for (const auto& p : performances) {
      const auto it = p.per_worker.find(id);
      if (it != p.per_worker.end()) perf[p.name] = it->second;
    }
    entry["performance"] = perf;
    workers.push_back(entry);
  }
  body["workers"] = workers;
  body["skipped"] = skipped;

  return {body, utc_now()};
}

std::string summarize(const EvaluationReport& report) {
  const auto& b = report.body;
  std::ostringstream out;
  out << "crowdbias evaluation report (schema " << b.at("schema_version").get<int>()
      << ", tool " << b.at("tool").at("version").get<std::string>() << ")\n";
  const auto& raw = b.at("dataset").at("raw");
  const auto& filtered = b.at("dataset").at("filtered");
  out << "dataset: " << raw.at("n_samples") << " samples, " << raw.at("n_workers")
      << " workers, " << raw.at("n_annotations") << " annotations\n";
  out << "set-up: " << b.at("setup").at("name").get<std::string>() << "\n";
  if (!b.at("quality").is_null()) {
    const auto& q = b.at("quality");
    out << "quality: " << q.at("iterations") << " iterations, converged="
        << (q.at("converged").get<bool>() ? "yes" : "no") << ", "
        << q.at("skipped_units") << " units skipped\n";
    const auto& f = b.at("filter");
    out << "filter: threshold " << format_number(f.at("wqs_threshold").get<double>(), 4)
        << " removed " << f.at("removed_count") << " worker(s), fraction "
        << format_number(f.at("removed_fraction").get<double>(), 4) << "\n";
  }
  out << "after filtering: " << filtered.at("n_workers") << " workers, "
      << filtered.at("n_annotations") << " annotations\n";
  out << "majority vote: " << b.at("majority_vote").at("ties") << " tie(s), rate "
      << format_number(b.at("majority_vote").at("tie_rate").get<double>(), 4) << "\n";
  const auto& split = b.at("split");
  out << "split: " << split.at("train_samples") << " train / " << split.at("eval_samples")
      << " eval samples (seed " << split.at("seed") << ")\n";
  for (const auto& g : b.at("groupings")) {
    out << "\ngrouping " << g.at("grouping").get<std::string>();
    if (!g.at("range_used").is_null()) {
      out << " range [" << format_number(g.at("range_used")[0].get<double>(), 4) << ", "
          << format_number(g.at("range_used")[1].get<double>(), 4) << "]";
    }
    out << "\n";
    for (const auto& group : g.at("groups")) {
      out << "  group " << group.at("label").get<std::string>() << ": "
          << group.at("size") << " worker(s)"
          << (group.at("undersized").get<bool>() ? " [undersized]" : "") << "\n";
    }
    for (const auto& r : g.at("results")) {
      out << "  " << r.at("model").get<std::string>() << ": ";
      if (!r.at("available").get<bool>()) {
        out << "unavailable (" << r.at("reason").get<std::string>() << ")\n";
        continue;
      }
      out << "disp " << format_number(r.at("disp").get<double>(), 4) << ", perf "
          << format_number(r.at("perf").get<double>(), 4) << "; group means";
      for (const auto& m : r.at("group_means")) out << " " << format_number(m.get<double>(), 3);
      out << "\n";
    }
  }
  if (!b.at("skipped").empty()) {
    out << "\nskipped:\n";
    for (const auto& s : b.at("skipped")) out << "  " << s.get<std::string>() << "\n";
  }
  return out.str();
}

void write_report(const EvaluationReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_json_file(report.to_json(), (base / "report.json").string());
  write_text_file(summarize(report), (base / "summary.txt").string());
}

EvaluationReport load_report(const std::string& path) {
  return EvaluationReport::from_json(read_json_file(path));
}

std::vector<std::string> emit_plots(const EvaluationReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file(content, (base / name).string());
    written.push_back(name);
  };
  const auto& b = report.body;
  try {
    for (const auto& g : b.at("groupings")) {
      const auto label = g.at("grouping").get<std::string>();
      const auto& matrix = g.at("matrix");
      emit("matrix_" + slug(label) + ".csv", matrix_csv_from_json(matrix));
      emit("heatmap_" + slug(label) + ".svg",
           heatmap_svg(matrix, "Mean per-worker performance, grouping " + label));
    }
    if (!b.at("quality").is_null()) {
      const auto& h = b.at("quality").at("wqs_histogram");
      emit("wqs_histogram.csv", histogram_csv(h));
      emit("wqs_histogram.svg", histogram_svg(h, "Worker quality score (WQS)"));
    }
    const auto& h = b.at("adr").at("histogram");
    emit("adr_histogram.csv", histogram_csv(h));
    emit("adr_histogram.svg", histogram_svg(h, "Average disagreement rate with the MV"));
  } catch (const json::exception& e) {
    throw InputError(std::string("report lacks plot data: ") + e.what());
  }
  return written;
}

std::string slug(const std::string& label) {
  std::string out;
  for (char c : label) out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  return out;
}

std::vector<std::size_t> unit_histogram(const std::vector<double>& values, std::size_t bins) {
  std::vector<std::size_t> counts(bins, 0);
  for (double v : values) {
    const double position = std::clamp(v, 0.0, 1.0) * static_cast<double>(bins);
    auto bin = static_cast<std::size_t>(std::floor(position));
    if (bin >= bins) bin = bins - 1;
    ++counts[bin];
  }
  return counts;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw ComputeError("cannot allocate digest context");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> guard(ctx, EVP_MD_CTX_free);
  if (EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    throw ComputeError("sha256 initialisation failed");
  }
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof buffer);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buffer, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx, digest, &length);
  std::string hex;
  static const char* kHex = "0123456789abcdef";
  for (unsigned int i = 0; i < length; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xf]);
  }
  return hex;
}

}  // namespace crowdbias

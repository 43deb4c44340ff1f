// crowdbias command-line interface.
//
// Exit codes: 0 success, 1 input error, 2 pipeline-stage failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crowdbias/aggregation.hpp"
#include "crowdbias/bias.hpp"
#include "crowdbias/crowdtruth.hpp"
#include "crowdbias/csv.hpp"
#include "crowdbias/dataset.hpp"
#include "crowdbias/io.hpp"
#include "crowdbias/jigsaw.hpp"
#include "crowdbias/models.hpp"
#include "crowdbias/report.hpp"
#include "crowdbias/simulator.hpp"
#include "crowdbias/validation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crowdbias;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitStage = 2;

// Reads `--config` files as a flat JSON object keyed by long option names. Keys are routed to
// the subcommand selected on the command line.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool,
                        std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& results = opt->results();
        j[name] = results.size() == 1 ? json(results.front()) : json(results);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config must be a JSON object");
    const auto selected = root_->get_subcommands();
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      if (!selected.empty()) item.parents = {selected.front()->get_name()};
      auto scalar = [](const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return std::string(v.get<bool>() ? "true" : "false");
        return v.dump();
      };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* sub, Common& common, bool out_required = true) {
  sub->add_option("--seed", common.seed, "Random seed");
  auto* out = sub->add_option("--out", common.out, "Output location");
  if (out_required) out->required();
}

struct DataSource {
  std::string dir;
  bool drop_invalid = false;
  int setup = 0;
};

void add_data(CLI::App* sub, DataSource& data, bool with_setup = true) {
  sub->add_option("--data", data.dir,
                  "Dataset directory (annotations.csv, workers.csv, samples.csv, dataset.json)")
      ->required();
  sub->add_flag("--drop-invalid", data.drop_invalid, "Drop invalid rows instead of failing");
  if (with_setup) {
    sub->add_option("--setup", data.setup, "Label set-up 1-4 (0 = default for the scale)")
        ->check(CLI::Range(0, 4));
  }
}

Dataset load(const DataSource& source) {
  auto result = load_dataset(DatasetPaths::in_directory(source.dir),
                             LoadOptions{source.drop_invalid});
  for (const auto& w : result.warnings) std::cerr << "warning: " << w.to_string() << "\n";
  for (const auto& r : result.rejected) std::cerr << "rejected: " << r.to_string() << "\n";
  return std::move(result.dataset);
}

Dataset load_remapped(const DataSource& source) {
  Dataset raw = load(source);
  const SetUp setup =
      source.setup == 0 ? SetUp::default_for(raw.scale()) : SetUp::from_number(source.setup);
  return remap(raw, setup);
}

std::string in_dir(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

// `--out` names either a directory or, when it carries `extension`, the file itself.
std::string out_file(const std::string& out, const std::string& default_name,
                     const std::string& extension) {
  const fs::path path(out);
  if (path.extension() != extension) return in_dir(out, default_name);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  return out;
}

std::string sibling(const std::string& file, const std::string& suffix) {
  fs::path path(file);
  return path.replace_extension(suffix).string();
}

// (sample index, worker index) pairs from a CSV with sample_id and worker_id columns.
std::vector<std::pair<std::size_t, std::size_t>> load_pairs(const std::string& path,
                                                            const Dataset& d) {
  const auto rows = csv::read_file(path);
  if (rows.empty()) throw InputError(path + ": empty file");
  const auto& header = rows.front().fields;
  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InputError(path + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t sc = column("sample_id");
  const std::size_t wc = column("worker_id");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() <= std::max(sc, wc)) {
      throw InputError(path + ":" + std::to_string(rows[r].line) + ": too few fields");
    }
    const auto s = d.sample_index(f[sc]);
    const auto w = d.worker_index(f[wc]);
    if (!s || !w) {
      throw InputError(path + ":" + std::to_string(rows[r].line) + ": unknown sample or worker");
    }
    pairs.emplace_back(*s, *w);
  }
  return pairs;
}

// Removes everything a failed command created under `path`.
class OutputGuard {
 public:
  explicit OutputGuard(std::string path) : path_(std::move(path)), existed_(fs::exists(path_)) {}
  ~OutputGuard() {
    if (!committed_ && !existed_ && !path_.empty()) {
      std::error_code ec;
      fs::remove_all(path_, ec);
    }
  }
  void commit() { committed_ = true; }

 private:
  std::string path_;
  bool existed_;
  bool committed_ = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crowd annotation quality and opinion-exclusion bias evaluation"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.set_config("--config", "",
                 "JSON file with option defaults for the subcommand (keys are long option names)");

  // ingest
  Common ingest_common;
  DataSource ingest_data;
  std::string jigsaw_dir;
  std::vector<std::string> ingest_axes;
  auto* ingest = app.add_subcommand("ingest", "Validate a dataset and write a normalized copy");
  add_common(ingest, ingest_common);
  auto* ingest_data_opt = ingest->add_option("--data", ingest_data.dir, "Dataset directory");
  ingest->add_flag("--drop-invalid", ingest_data.drop_invalid,
                   "Drop invalid rows instead of failing");
  auto* jigsaw_opt =
      ingest->add_option("--jigsaw", jigsaw_dir, "Directory with the Wikipedia toxicity TSV files");
  ingest_data_opt->excludes(jigsaw_opt);
  ingest->add_option("--axes", ingest_axes,
                     "Attributes for the distribution report (default: all declared)");

  // simulate
  Common sim_common;
  std::string profile_path;
  std::string preset = "spammer_separation";
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic crowd with ground truth");
  add_common(simulate, sim_common);
  auto* profile_opt = simulate->add_option("--profile", profile_path, "Crowd profile JSON");
  simulate->add_option("--preset", preset, "spammer_separation, polarized or three_kinds")
      ->excludes(profile_opt)
      ->check(CLI::IsMember({"spammer_separation", "polarized", "three_kinds"}));

  // aggregate
  Common agg_common;
  DataSource agg_data;
  auto* aggregate = app.add_subcommand("aggregate", "Remap labels and take the majority vote");
  add_common(aggregate, agg_common);
  add_data(aggregate, agg_data);

  // quality
  Common quality_common;
  DataSource quality_data;
  QualityOptions quality_options;
  auto* quality = app.add_subcommand("quality", "Compute CrowdTruth unit/worker/annotation scores");
  add_common(quality, quality_common);
  add_data(quality, quality_data);
  quality->add_option("--tol", quality_options.tol, "Convergence tolerance")
      ->capture_default_str();
  quality->add_option("--max-iter", quality_options.max_iter, "Iteration cap")
      ->capture_default_str();

  // filter
  Common filter_common;
  DataSource filter_data;
  std::string filter_scores;
  double threshold = 0.0;
  bool force = false;
  auto* filter = app.add_subcommand("filter", "Remove workers whose WQS is below a threshold");
  add_common(filter, filter_common);
  add_data(filter, filter_data);
  filter->add_option("--scores", filter_scores, "scores.json (computed when omitted)");
  filter->add_option("--threshold", threshold, "WQS threshold in [0, 1]")->required();
  filter->add_flag("--force", force, "Allow removing more than half of the workers");

  // train
  Common train_common;
  DataSource train_data;
  std::string train_model = "m1";
  TrainConfig train_config;
  double train_eval_fraction = 0.2;
  auto* train = app.add_subcommand("train", "Train model 1 or model 2");
  add_common(train, train_common);
  add_data(train, train_data);
  train->add_option("--model", train_model, "m1 or m2 (1 and 2 are accepted)")
      ->check(CLI::IsMember({"m1", "m2", "1", "2"}));
  train->add_option("--lr", train_config.learning_rate, "Learning rate")->capture_default_str();
  train->add_option("--epochs", train_config.epochs, "Epochs")->capture_default_str();
  train->add_option("--l2", train_config.l2, "L2 penalty")->capture_default_str();
  train->add_option("--batch-size", train_config.batch_size, "Mini-batch size")
      ->capture_default_str();
  train->add_option("--hash-dim", train_config.hash_dim, "Hashed feature dimension")
      ->capture_default_str();
  train->add_option("--eval-fraction", train_eval_fraction,
                    "Held-out sample fraction (0 trains on everything)")
      ->check(CLI::Range(0.0, 0.9))
      ->capture_default_str();

  // predict
  Common predict_common;
  DataSource predict_data;
  std::string predict_model;
  auto* predict = app.add_subcommand("predict", "Predict every (sample, worker) pair of a dataset");
  add_common(predict, predict_common);
  add_data(predict, predict_data);
  std::string predict_pairs;
  predict->add_option("--model,--model-file", predict_model, "model.bin")->required();
  predict->add_option("--in", predict_pairs,
                      "CSV of sample_id,worker_id pairs (default: every annotated pair)");

  // evaluate / matrix
  Common eval_common;
  DataSource eval_data;
  std::vector<std::string> eval_models;
  std::vector<std::string> eval_groupings;
  std::size_t eval_min_group = 5;
  auto* evaluate = app.add_subcommand("evaluate", "Bias metric (disp, perf) per model and grouping");
  auto* matrix = app.add_subcommand("matrix", "Group x model performance matrix");
  for (auto* sub : {evaluate, matrix}) {
    add_common(sub, eval_common);
    add_data(sub, eval_data);
    sub->add_option("--model", eval_models, "model.bin path or 'oracle' (repeatable)")
        ->required();
    sub->add_option("--grouping", eval_groupings, "adr:5, adr:5:0:1, attr:gender, attr:a*b")
        ->required();
    sub->add_option("--min-group-size", eval_min_group, "Groups below this are flagged")
        ->capture_default_str();
  }

  // validate
  Common validate_common;
  std::string validate_scores;
  std::string worker_judgements;
  std::string unit_judgements;
  auto* validate = app.add_subcommand("validate", "Compare quality scores with manual judgements");
  add_common(validate, validate_common);
  validate->add_option("--scores", validate_scores, "scores.json")->required();
  validate->add_option("--worker-judgements", worker_judgements, "worker_id,score CSV");
  validate->add_option("--unit-judgements", unit_judgements, "sample_id,score CSV");

  // report
  Common report_common;
  std::string pipeline_path;
  bool report_plots = false;
  auto* report = app.add_subcommand("report", "Run the full pipeline and write the report");
  report->add_option("--config", pipeline_path, "Pipeline config JSON")->required();
  report->add_option("--seed", report_common.seed,
                     "Overrides the split, training and simulator seeds");
  report->add_option("--out", report_common.out, "Report directory")->required();
  report->add_flag("--plots", report_plots, "Also emit plots into <out>/plots");

  // plots
  Common plots_common;
  std::string plots_report;
  auto* plots = app.add_subcommand("plots", "SVG heatmaps and histograms from a report");
  add_common(plots, plots_common);
  plots->add_option("--report", plots_report, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  std::optional<OutputGuard> guard;
  try {
    if (ingest->parsed()) {
      guard.emplace(ingest_common.out);
      if (!jigsaw_dir.empty()) {
        const auto stats = import_jigsaw(JigsawFiles::in_directory(jigsaw_dir), ingest_common.out);
        std::cout << "imported " << stats.samples << " samples, " << stats.workers
                  << " workers (" << stats.workers_without_demographics
                  << " without demographics), " << stats.annotations << " annotations, "
                  << stats.skipped_annotations << " skipped\n";
        ingest_data.dir = ingest_common.out;
      } else if (ingest_data.dir.empty()) {
        throw InputError("ingest needs --data or --jigsaw");
      }
      const Dataset d = load(ingest_data);
      const auto min_count = load_dataset_config(DatasetPaths::in_directory(ingest_data.dir).config).min_count;
      if (jigsaw_dir.empty()) save_dataset(d, ingest_common.out, min_count);
      const auto axes = ingest_axes.empty() ? d.schema().names() : ingest_axes;
      write_json_file(to_json(distribution_report(d, axes, min_count)),
                      in_dir(ingest_common.out, "distribution.json"));
      std::cout << d.n() << " samples, " << d.f() << " workers, " << d.l() << " annotations\n";
    } else if (simulate->parsed()) {
      guard.emplace(sim_common.out);
      CrowdProfile profile;
      if (!profile_path.empty()) {
        profile = load_profile(profile_path);
        if (sim_common.seed) profile.seed = *sim_common.seed;
      } else {
        const std::uint64_t seed = sim_common.seed.value_or(42);
        profile = preset == "polarized"   ? presets::polarized(seed)
                  : preset == "three_kinds" ? presets::three_kinds(seed)
                                            : presets::spammer_separation(seed);
      }
      const auto sim = generate(profile);
      write_simulation(sim, sim_common.out);
      write_json_file(profile.to_json(), in_dir(sim_common.out, "profile.json"));
      std::cout << "simulated " << sim.dataset.n() << " samples, " << sim.dataset.f()
                << " workers, " << sim.dataset.l() << " annotations\n";
    } else if (aggregate->parsed()) {
      guard.emplace(agg_common.out);
      const Dataset d = load_remapped(agg_data);
      const auto mv = majority_vote(d);
      save_dataset(d, agg_common.out);
      write_text_file(majority_vote_csv(mv), in_dir(agg_common.out, "majority_vote.csv"));
      std::cout << mv.votes.size() << " samples, tie rate " << format_number(mv.tie_rate(), 4)
                << "\n";
    } else if (quality->parsed()) {
      guard.emplace(quality_common.out);
      const Dataset d = load_remapped(quality_data);
      const auto scores = compute_quality(d, quality_options);
      write_json_file(to_json(scores), in_dir(quality_common.out, "scores.json"));
      for (const auto& w : scores.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "iterations " << scores.iterations << ", converged "
                << (scores.converged ? "yes" : "no") << "\n";
    } else if (filter->parsed()) {
      guard.emplace(filter_common.out);
      const Dataset d = load_remapped(filter_data);
      const QualityScores scores =
          filter_scores.empty() ? compute_quality(d) : quality_from_json(read_json_file(filter_scores));
      const auto result = filter_spammers(d, scores, threshold, force);
      save_dataset(result.dataset, filter_common.out);
      write_text_file(removed_workers_csv(result.removed),
                      in_dir(filter_common.out, "removed_workers.csv"));
      std::cout << "removed " << result.removed.size() << " of " << d.f() << " workers\n";
    } else if (train->parsed()) {
      guard.emplace(train_common.out);
      if (train_common.seed) train_config.seed = *train_common.seed;
      const Dataset d = load_remapped(train_data);
      std::vector<std::string> train_ids;
      json split_json{{"eval_fraction", train_eval_fraction}};
      if (train_eval_fraction > 0.0) {
        const auto split = split_samples(d, majority_vote(d), train_eval_fraction,
                                         train_common.seed.value_or(42));
        train_ids = split.train;
        split_json["seed"] = split.seed;
        split_json["train"] = split.train;
        split_json["eval"] = split.eval;
      } else {
        for (const auto& s : d.samples()) train_ids.push_back(s.sample_id);
        split_json["train"] = train_ids;
        split_json["eval"] = json::array();
      }
      const Dataset train_set = restrict_to_samples(d, train_ids);
      const ModelKind kind = parse_model_kind(train_model);
      const Predictor p = kind == ModelKind::kModel1 ? build_model1(train_set, train_config)
                                                     : build_model2(train_set, train_config);
      const std::string model_path = out_file(train_common.out, "model.bin", ".bin");
      save_model(p, model_path);
      write_json_file(split_json, model_path == train_common.out
                                      ? sibling(model_path, ".split.json")
                                      : in_dir(train_common.out, "split.json"));
      const auto& trace = p.model()->loss_trace;
      std::cout << "trained " << to_string(kind) << " on " << train_set.n() << " samples, final loss "
                << format_number(trace.empty() ? 0.0 : trace.back(), 6) << "\n";
    } else if (predict->parsed()) {
      guard.emplace(predict_common.out);
      const Dataset d = load_remapped(predict_data);
      const Predictor p = load_model(predict_model);
      std::ostringstream out;
      if (predict_pairs.empty()) {
        out << "sample_id,worker_id,label,prediction\n";
        for (std::size_t a = 0; a < d.l(); ++a) {
          const auto& s = d.samples()[d.annotation_sample(a)];
          const auto& w = d.workers()[d.annotation_worker(a)];
          out << csv::escape(s.sample_id) << "," << csv::escape(w.worker_id) << ","
              << d.annotations()[a].label << "," << p.predict(s, w) << "\n";
        }
      } else {
        out << "sample_id,worker_id,prediction\n";
        for (const auto& [si, wi] : load_pairs(predict_pairs, d)) {
          const auto& s = d.samples()[si];
          const auto& w = d.workers()[wi];
          out << csv::escape(s.sample_id) << "," << csv::escape(w.worker_id) << ","
              << p.predict(s, w) << "\n";
        }
      }
      write_text_file(out.str(), out_file(predict_common.out, "predictions.csv", ".csv"));
    } else if (evaluate->parsed() || matrix->parsed()) {
      guard.emplace(eval_common.out);
      const Dataset d = load_remapped(eval_data);
      const auto mv = majority_vote(d);
      const auto adr_table = adr(d, mv);
      std::vector<ModelPerformance> performances;
      for (const auto& m : eval_models) {
        const Predictor p = m == "oracle" ? build_model3(d) : load_model(m);
        const std::string name =
            m == "oracle" ? "oracle" : fs::path(m).parent_path().filename().string() + "/" +
                                           std::string(to_string(p.kind()));
        performances.push_back({name, per_worker_performance(d, p)});
      }
      json out = json::array();
      for (const auto& text : eval_groupings) {
        const auto spec = GroupingSpec::parse(text, eval_min_group);
        const auto partition = group_workers(d, &adr_table, spec);
        for (const auto& w : partition.warnings) std::cerr << "warning: " << w << "\n";
        const auto gm = group_matrix(partition, performances);
        if (matrix->parsed()) {
          write_text_file(matrix_csv(gm), in_dir(eval_common.out, "matrix_" + slug(spec.label()) + ".csv"));
          std::cout << matrix_csv(gm);
          out.push_back(to_json(gm));
          continue;
        }
        json entry{{"partition", to_json(partition)}, {"results", json::array()}};
        for (const auto& perf : performances) {
          const auto bias = bias_metric(make_group_report(partition, perf.per_worker));
          json r = to_json(bias);
          r["model"] = perf.name;
          entry["results"].push_back(r);
          std::cout << spec.label() << " " << perf.name << ": disp " << format_number(bias.disp, 4)
                    << " perf " << format_number(bias.perf, 4) << "\n";
        }
        out.push_back(entry);
      }
      write_json_file(out, in_dir(eval_common.out, matrix->parsed() ? "matrix.json" : "bias.json"));
    } else if (validate->parsed()) {
      guard.emplace(validate_common.out);
      const auto scores = quality_from_json(read_json_file(validate_scores));
      const auto workers = worker_judgements.empty() ? std::vector<Judgement>{}
                                                     : load_judgements(worker_judgements);
      const auto units =
          unit_judgements.empty() ? std::vector<Judgement>{} : load_judgements(unit_judgements);
      const auto result = validate_quality(scores, workers, units);
      write_json_file(to_json(result), validate_common.out);
      std::cout << "mse_wqs "
                << (result.mse_wqs ? format_number(*result.mse_wqs, 6) : std::string("n/a"))
                << ", auroc_uqs "
                << (result.auroc_uqs ? format_number(*result.auroc_uqs, 6) : std::string("n/a"))
                << "\n";
    } else if (report->parsed()) {
      guard.emplace(report_common.out);
      PipelineConfig config = load_pipeline_config(pipeline_path);
      if (report_common.seed) {
        config.split_seed = *report_common.seed;
        config.train.seed = *report_common.seed;
        if (config.simulate) config.simulate->seed = *report_common.seed;
      }
      const auto result = run_pipeline(config);
      write_report(result, report_common.out);
      if (report_plots) emit_plots(result, (fs::path(report_common.out) / "plots").string());
      std::cout << summarize(result);
    } else if (plots->parsed()) {
      guard.emplace(plots_common.out);
      for (const auto& name : emit_plots(load_report(plots_report), plots_common.out)) {
        std::cout << name << "\n";
      }
    }
    if (guard) guard->commit();
    return 0;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  } catch (const DatasetError& e) {
    std::cerr << "error: invalid dataset\n";
    for (const auto& issue : e.issues()) std::cerr << "  " << issue.to_string() << "\n";
    return kExitInput;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
}

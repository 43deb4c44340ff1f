// Acceptance suite: one PASS/FAIL (or SKIP) line per criterion. Exits non-zero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crowdbias/bias.hpp"
#include "crowdbias/crowdtruth.hpp"
#include "crowdbias/io.hpp"
#include "crowdbias/jigsaw.hpp"
#include "crowdbias/models.hpp"
#include "crowdbias/report.hpp"
#include "crowdbias/simulator.hpp"
#include "crowdbias/validation.hpp"
#include "support.hpp"

using namespace crowdbias;
using namespace crowdbias::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum class Status { kPass, kFail, kSkip } status;
  std::string detail;
};

Outcome pass(std::string detail) { return {Outcome::Status::kPass, std::move(detail)}; }
Outcome fail(std::string detail) { return {Outcome::Status::kFail, std::move(detail)}; }
Outcome skip(std::string detail) { return {Outcome::Status::kSkip, std::move(detail)}; }

std::string fmt(double v, int decimals = 4) { return format_number(v, decimals); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// The polarized simulator pipeline used by several criteria, run once.
const EvaluationReport& polarized_report() {
  static const EvaluationReport report =
      run_pipeline(load_pipeline_config(std::string(CROWDBIAS_TEST_DATA) + "/pipeline_polarized.json"));
  return report;
}

const json& result_for(const json& grouping, const std::string& model) {
  for (const auto& r : grouping.at("results")) {
    if (r.at("model") == model) return r;
  }
  throw Error("no result for model " + model);
}

const json& grouping_with_mode(const json& body, const std::string& mode) {
  for (const auto& g : body.at("groupings")) {
    if (g.at("mode") == mode) return g;
  }
  throw Error("no grouping with mode " + mode);
}

Outcome spammer_separation() {
  const auto start = std::chrono::steady_clock::now();
  const auto sim = generate(presets::spammer_separation(42));
  const auto q = compute_quality(sim.dataset);
  const double elapsed = seconds_since(start);
  std::size_t coherent = 0;
  std::size_t spammers = 0;
  double max_spammer = 0.0;
  double min_coherent = 1.0;
  for (std::size_t w = 0; w < sim.truth.worker_ids.size(); ++w) {
    const double v = q.wqs.at(sim.truth.worker_ids[w]);
    if (sim.truth.roles[w] == Role::kSpammer) {
      ++spammers;
      max_spammer = std::max(max_spammer, v);
    } else {
      ++coherent;
      min_coherent = std::min(min_coherent, v);
    }
  }
  std::ostringstream d;
  d << coherent << " coherent, " << spammers << " spammers, " << sim.dataset.n() << " samples x "
    << sim.dataset.l() / sim.dataset.n() << " labels; " << q.iterations << " iterations, max spammer WQS "
    << fmt(max_spammer) << " < min coherent WQS " << fmt(min_coherent) << ", " << fmt(elapsed, 3)
    << " s";
  const bool shape = coherent == 50 && spammers == 5 && sim.dataset.n() == 200 &&
                     sim.dataset.l() == 2000;
  const bool ok = shape && q.converged && q.iterations <= 50 && max_spammer < min_coherent &&
                  elapsed < 10.0;
  return ok ? pass(d.str()) : fail(d.str());
}

Outcome adr_trend() {
  const json& body = polarized_report().body;
  const json& adr_grouping = grouping_with_mode(body, "adr_bins");
  const json& m1 = result_for(adr_grouping, "m1");
  const json& m2 = result_for(adr_grouping, "m2");
  const auto means = m1.at("group_means").get<std::vector<double>>();
  std::size_t inversions = 0;
  double worst = 0.0;
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i] > means[i - 1]) {
      ++inversions;
      worst = std::max(worst, means[i] - means[i - 1]);
    }
  }
  const double d1 = m1.at("disp").get<double>();
  const double d2 = m2.at("disp").get<double>();
  std::ostringstream d;
  d << "m1 bin means";
  for (double m : means) d << " " << fmt(m, 3);
  d << " (" << inversions << " inversion(s)); ADR-disp m1 " << fmt(d1) << " < m2 " << fmt(d2);
  const bool monotone = inversions == 0 || (inversions == 1 && worst <= 0.02);
  return monotone && means.size() >= 2 && d1 < d2 ? pass(d.str()) : fail(d.str());
}

Outcome oracle_identity() {
  const json& body = polarized_report().body;
  std::ostringstream d;
  bool ok = true;
  for (const char* mode : {"adr_bins", "protected_attribute"}) {
    const json& r = result_for(grouping_with_mode(body, mode), "oracle");
    const double disp = r.at("disp").get<double>();
    const double perf = r.at("perf").get<double>();
    ok = ok && disp == 1.0 && perf == 1.0;
    d << mode << " (" << fmt(disp, 6) << ", " << fmt(perf, 6) << ") ";
  }
  return ok ? pass(d.str()) : fail(d.str());
}

GroupReport report_from_means(const std::vector<double>& means) {
  GroupReport r;
  r.grouping = "fixture";
  for (std::size_t i = 0; i < means.size(); ++i) {
    GroupPerformance g;
    g.label = "g" + std::to_string(i);
    g.members = {"w" + std::to_string(i)};
    g.performances = {means[i]};
    g.size = 1;
    g.mean = means[i];
    r.groups.push_back(g);
  }
  return r;
}

Outcome metric_identities() {
  const BiasResult a = bias_metric(report_from_means({0.8, 0.8, 0.8}));
  const BiasResult b = bias_metric(report_from_means({1.0, 0.0}));
  const bool ok = std::abs(a.disp - 1.0) < 1e-12 && std::abs(a.perf - 0.8) < 1e-12 &&
                  std::abs(b.disp - 0.5) < 1e-12 && std::abs(b.perf - 0.5) < 1e-12;
  std::ostringstream d;
  d << "[0.8,0.8,0.8] -> (" << fmt(a.disp, 12) << ", " << fmt(a.perf, 12) << "); [1,0] -> ("
    << fmt(b.disp, 12) << ", " << fmt(b.perf, 12) << ")";
  return ok ? pass(d.str()) : fail(d.str());
}

std::vector<std::vector<int>> random_matrix(std::mt19937_64& rng, std::size_t samples,
                                            std::size_t workers, int k, double density) {
  std::uniform_real_distribution<double> u(0, 1);
  std::uniform_int_distribution<int> label(0, k - 1);
  std::vector<std::vector<int>> m(samples, std::vector<int>(workers, -1));
  for (auto& row : m) {
    for (auto& cell : row) cell = u(rng) < density ? label(rng) : -1;
    row[0] = label(rng);
    row[1] = label(rng);
  }
  return m;
}

ScaleSpec scale_of(int k) {
  ScaleSpec s;
  for (int v = 0; v < k; ++v) s.values.push_back(v);
  return s;
}

Outcome crowdtruth_invariants() {
  bool in_range = true;
  double worst_permutation = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const int k = 2 + static_cast<int>(seed % 3);
    const Dataset d = dataset_from_matrix(random_matrix(rng, 20, 8, k, 0.6), scale_of(k));
    const auto a = compute_quality(d, {1e-12, 200}, [&](int, const QualityScores& s) {
      for (const auto* m : {&s.uqs, &s.wqs}) {
        for (const auto& [id, v] : *m) in_range = in_range && v >= 0.0 && v <= 1.0;
      }
      for (const auto& [label, v] : s.aqs) in_range = in_range && v >= 0.0 && v <= 1.0;
    });
    auto samples = d.samples();
    auto workers = d.workers();
    auto annotations = d.annotations();
    std::shuffle(samples.begin(), samples.end(), rng);
    std::shuffle(workers.begin(), workers.end(), rng);
    std::shuffle(annotations.begin(), annotations.end(), rng);
    const auto b =
        compute_quality(Dataset(samples, workers, annotations, d.scale(), d.schema()), {1e-12, 200});
    for (const auto& [id, v] : a.wqs) worst_permutation = std::max(worst_permutation, std::abs(v - b.wqs.at(id)));
    for (const auto& [id, v] : a.uqs) worst_permutation = std::max(worst_permutation, std::abs(v - b.uqs.at(id)));
    for (const auto& [l, v] : a.aqs) worst_permutation = std::max(worst_permutation, std::abs(v - b.aqs.at(l)));
  }
  const auto first = compute_quality(dataset_from_matrix({{0, 0, 1}}), {1e-6, 1});
  const double uqs = first.uqs.at("s0");
  std::ostringstream d;
  d << "scores in [0,1] on every iteration: " << (in_range ? "yes" : "no")
    << "; max permutation difference " << worst_permutation << "; UQS[a,a,b] = " << fmt(uqs, 17);
  const bool ok = in_range && worst_permutation < 1e-9 && uqs == 1.0 / 3.0;
  return ok ? pass(d.str()) : fail(d.str());
}

Outcome validation_statistics() {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const double separable = auroc(s, std::vector<int>{1, 1, 0, 0});
  const double anti = auroc(s, std::vector<int>{0, 0, 1, 1});
  const double tied = auroc(std::vector<double>{0.4, 0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1, 0});
  const std::vector<double> x{0.1, 0.5, 0.9};
  const bool mse_ok = mse(x, x) == 0.0 &&
                      mse(std::vector<double>{1, 0}, std::vector<double>{0, 0}) == 0.5 &&
                      mse(std::vector<double>{0.2, 0.4}, std::vector<double>{0.4, 0.2}) ==
                          mse(std::vector<double>{0.4, 0.2}, std::vector<double>{0.2, 0.4});
  double worst_flip = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = 2 + rng() % 59;
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) {
      scores.push_back(static_cast<double>(rng() % 10) / 10.0);
      labels.push_back(static_cast<int>(rng() % 2));
    }
    labels[0] = 0;
    labels[1] = 1;
    std::vector<int> flipped;
    for (int l : labels) flipped.push_back(1 - l);
    worst_flip = std::max(worst_flip, std::abs(auroc(scores, labels) + auroc(scores, flipped) - 1.0));
  }
  std::ostringstream d;
  d << "AUROC " << fmt(separable, 1) << " / " << fmt(anti, 1) << " / " << fmt(tied, 1)
    << "; MSE identities " << (mse_ok ? "hold" : "broken") << "; max |auroc(l)+auroc(!l)-1| over 100 seeds "
    << worst_flip;
  const bool ok = separable == 1.0 && anti == 0.0 && tied == 0.5 && mse_ok && worst_flip < 1e-12;
  return ok ? pass(d.str()) : fail(d.str());
}

Outcome gradient_check() {
  const double rows[10][4] = {{1.0, 0.5, 0.0, -1.0}, {0.2, -0.3, 1.5, 0.0},  {-1.0, 2.0, 0.1, 0.3},
                              {0.0, 0.0, -0.7, 1.2}, {0.9, 0.9, 0.9, 0.9},   {-0.4, 0.0, 0.0, 2.0},
                              {1.3, -1.1, 0.4, 0.0}, {0.0, 0.6, -0.2, -0.5}, {-2.0, 0.1, 0.3, 0.0},
                              {0.5, 0.0, 1.0, 1.0}};
  const std::vector<int> y{1, 0, 1, 0, 1, 1, 0, 0, 1, 0};
  FeatureMatrix x{4, {}};
  for (const auto& r : rows) {
    SparseVector v;
    for (std::uint32_t i = 0; i < 4; ++i) {
      if (r[i] != 0.0) v.entries.emplace_back(i, r[i]);
    }
    x.rows.push_back(v);
  }
  double worst = 0.0;
  for (double l2 : {0.0, 1e-4, 0.1}) {
    LRModel m;
    m.weights = {0.3, -0.2, 0.5, 0.1};
    m.bias = -0.15;
    const auto g = logistic_gradient(m, x, y, l2);
    std::vector<double> analytic = g.weights;
    analytic.push_back(g.bias);
    const double h = 1e-6;
    double diff = 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      LRModel plus = m;
      LRModel minus = m;
      double& p = i < 4 ? plus.weights[i] : plus.bias;
      double& q = i < 4 ? minus.weights[i] : minus.bias;
      p += h;
      q -= h;
      const double numeric = (logistic_loss(plus, x, y, l2) - logistic_loss(minus, x, y, l2)) / (2 * h);
      diff += (numeric - analytic[i]) * (numeric - analytic[i]);
      norm += analytic[i] * analytic[i];
    }
    worst = std::max(worst, std::sqrt(diff / norm));
  }
  std::ostringstream d;
  d << "max relative error " << std::scientific << std::setprecision(2) << worst
    << " over l2 in {0, 1e-4, 0.1}";
  return worst < 1e-5 ? pass(d.str()) : fail(d.str());
}

Outcome determinism() {
  const auto config =
      load_pipeline_config(std::string(CROWDBIAS_TEST_DATA) + "/pipeline_polarized.json");
  const EvaluationReport a = run_pipeline(config);
  const EvaluationReport b = run_pipeline(config);
  const TempDir da("acceptance_plots_a");
  const TempDir db("acceptance_plots_b");
  std::size_t csvs = 0;
  bool same_plots = true;
  const auto files = emit_plots(a, da.str());
  emit_plots(b, db.str());
  for (const auto& f : files) {
    if (fs::path(f).extension() != ".csv") continue;
    ++csvs;
    same_plots = same_plots && slurp(da.file(f)) == slurp(db.file(f));
  }
  const bool same_body = a.body.dump() == b.body.dump();
  std::ostringstream d;
  d << "report body " << (same_body ? "identical" : "differs") << " (" << a.body.dump().size()
    << " bytes); " << csvs << " plot CSVs " << (same_plots ? "identical" : "differ");
  return same_body && same_plots && csvs > 0 ? pass(d.str()) : fail(d.str());
}

Outcome public_corpus() {
  const char* dir = std::getenv("CROWDBIAS_JIGSAW_DIR");
  if (dir == nullptr || *dir == '\0') {
    return skip("set CROWDBIAS_JIGSAW_DIR (and CROWDBIAS_JIGSAW_WQS_THRESHOLD) to run");
  }
  const char* threshold_text = std::getenv("CROWDBIAS_JIGSAW_WQS_THRESHOLD");
  if (threshold_text == nullptr || *threshold_text == '\0') {
    return fail("CROWDBIAS_JIGSAW_WQS_THRESHOLD is not set");
  }
  const auto start = std::chrono::steady_clock::now();
  const TempDir work("acceptance_jigsaw");
  import_jigsaw(JigsawFiles::in_directory(dir), work.str());
  PipelineConfig config;
  config.data = DatasetPaths::in_directory(work.str());
  config.wqs_threshold = std::stod(threshold_text);
  config.groupings = {"adr:5", "attr:gender*age_group*education"};
  const json body = run_pipeline(config).body;
  const double elapsed = seconds_since(start);

  std::ostringstream d;
  bool ok = elapsed < 1800.0;
  const double removed = body.at("filter").at("removed_fraction").get<double>();
  ok = ok && std::abs(removed - 0.0233) <= 0.01;
  d << "removed " << fmt(100 * removed, 2) << "% of workers";

  double at_zero = 0;
  double near_015 = 0;
  double high = 0;
  double kept = 0;
  for (const auto& w : body.at("workers")) {
    if (w.at("filtered_out").get<bool>() || w.at("adr").is_null()) continue;
    const double v = w.at("adr").get<double>();
    kept += 1;
    at_zero += v == 0.0 ? 1 : 0;
    near_015 += v >= 0.10 && v < 0.20 ? 1 : 0;
    high += v >= 0.20 ? 1 : 0;
  }
  const auto check_share = [&](const char* name, double count, double expected) {
    const double share = kept > 0 ? count / kept : 0.0;
    ok = ok && std::abs(share - expected) <= 0.03;
    d << "; ADR " << name << " " << fmt(100 * share, 1) << "%";
  };
  check_share("= 0", at_zero, 0.105);
  check_share("in [0.10, 0.20)", near_015, 0.51);
  check_share(">= 0.20", high, 0.045);

  struct Expected {
    const char* mode;
    const char* model;
    double disp;
    double perf;
  };
  for (const Expected& e : {Expected{"protected_attribute", "m1", 0.94, 0.68},
                            Expected{"protected_attribute", "m2", 0.72, 0.63},
                            Expected{"adr_bins", "m1", 0.93, 0.68},
                            Expected{"adr_bins", "m2", 0.96, 0.68},
                            Expected{"protected_attribute", "oracle", 1.0, 1.0},
                            Expected{"adr_bins", "oracle", 1.0, 1.0}}) {
    const json& r = result_for(grouping_with_mode(body, e.mode), e.model);
    if (!r.at("available").get<bool>()) {
      ok = false;
      d << "; " << e.mode << "/" << e.model << " unavailable";
      continue;
    }
    const double disp = r.at("disp").get<double>();
    const double perf = r.at("perf").get<double>();
    ok = ok && std::abs(disp - e.disp) <= 0.05 && std::abs(perf - e.perf) <= 0.05;
    d << "; " << e.mode << "/" << e.model << " (" << fmt(disp, 3) << ", " << fmt(perf, 3) << ")";
  }
  d << "; " << fmt(elapsed, 1) << " s";
  return ok ? pass(d.str()) : fail(d.str());
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"spammer separation", spammer_separation},
      {"ADR trend on the polarized crowd", adr_trend},
      {"oracle identity", oracle_identity},
      {"metric identities", metric_identities},
      {"CrowdTruth invariants", crowdtruth_invariants},
      {"validation statistics", validation_statistics},
      {"gradient check", gradient_check},
      {"determinism", determinism},
      {"public toxicity corpus", public_corpus},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = fail(std::string("exception: ") + e.what());
    }
    const char* tag = outcome.status == Outcome::Status::kPass   ? "PASS"
                      : outcome.status == Outcome::Status::kSkip ? "SKIP"
                                                                 : "FAIL";
    failures += outcome.status == Outcome::Status::kFail ? 1 : 0;
    std::cout << tag << " criterion " << i + 1 << ": " << criteria[i].first << " - "
              << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

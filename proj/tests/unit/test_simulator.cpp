#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "crowdbias/aggregation.hpp"
#include "crowdbias/bias.hpp"
#include "crowdbias/simulator.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crowdbias;
using namespace crowdbias::testing;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

CrowdProfile noiseless(std::size_t workers) {
  CrowdProfile p;
  p.populations.push_back({"crowd", Role::kCoherent, workers, "", 0.0, {}});
  p.n_samples = 60;
  p.labels_per_sample = 5;
  p.scale = five_point_scale();
  p.seed = 5;
  return p;
}

// Per-sample MV from raw counts, ties to the lowest (most toxic) value.
std::map<std::string, int> brute_force_mv(const Dataset& d) {
  std::map<std::string, std::map<int, int>> counts;
  for (const auto& a : d.annotations()) ++counts[a.sample_id][a.label];
  std::map<std::string, int> mv;
  for (const auto& [sample, c] : counts) {
    int best = 0;
    int best_count = -1;
    for (const auto& [label, n] : c) {
      if (n > best_count) {
        best = label;
        best_count = n;
      }
    }
    mv[sample] = best;
  }
  return mv;
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("a noiseless coherent crowd reproduces the coherent opinion") {
    const auto sim = generate(noiseless(12));
    const Dataset& d = sim.dataset;
    CHECK(d.n() == 60);
    CHECK(d.f() == 12);
    CHECK(d.l() == 300);
    const auto& coherent = sim.truth.opinions.at("coherent");
    for (const auto& a : d.annotations()) {
      CHECK(a.label == coherent[d.sample_index(a.sample_id).value()]);
    }
    const auto mv = majority_vote(d);
    for (std::size_t s = 0; s < d.n(); ++s) CHECK(mv.label_at(s) == coherent[s]);
    for (const auto& [id, entry] : adr(d, mv).workers) CHECK(entry.adr == 0.0);
  }

  TEST_CASE("every sample receives labels_per_sample distinct workers and loads are balanced") {
    const auto sim = generate(presets::three_kinds(8));
    const Dataset& d = sim.dataset;
    std::size_t lo = d.l();
    std::size_t hi = 0;
    for (std::size_t s = 0; s < d.n(); ++s) {
      std::set<std::size_t> workers;
      for (std::size_t a : d.sample_annotations(s)) workers.insert(d.annotation_worker(a));
      CHECK(workers.size() == 10);
      CHECK(d.sample_annotations(s).size() == 10);
    }
    for (std::size_t w = 0; w < d.f(); ++w) {
      lo = std::min(lo, d.worker_annotations(w).size());
      hi = std::max(hi, d.worker_annotations(w).size());
    }
    CHECK(hi - lo <= 1);
  }

  TEST_CASE("same seed gives byte-identical files; another seed differs") {
    TempDir a("sim_a");
    TempDir b("sim_b");
    TempDir c("sim_c");
    write_simulation(generate(presets::polarized(42)), a.str());
    write_simulation(generate(presets::polarized(42)), b.str());
    write_simulation(generate(presets::polarized(43)), c.str());
    for (const char* name : {"annotations.csv", "workers.csv", "samples.csv", "dataset.json",
                             "ground_truth.csv", "opinions.csv"}) {
      CHECK_MESSAGE(slurp(a.file(name)) == slurp(b.file(name)), name);
    }
    CHECK(slurp(a.file("annotations.csv")) != slurp(c.file("annotations.csv")));
    const Dataset reloaded = load_dataset(DatasetPaths::in_directory(a.str())).dataset;
    CHECK(reloaded == generate(presets::polarized(42)).dataset);
  }

  TEST_CASE("without mistakes or spammers, a strict coherent majority yields the coherent MV") {
    CrowdProfile p;
    p.opinions = {{"other", 0.3}};
    p.populations = {{"main", Role::kCoherent, 6, "", 0.0, {}},
                     {"side", Role::kMinority, 4, "other", 0.0, {}}};
    p.n_samples = 100;
    p.labels_per_sample = 7;
    p.seed = 2;
    const auto sim = generate(p);
    const auto mv = majority_vote(sim.dataset);
    std::size_t checked = 0;
    for (std::size_t s = 0; s < sim.dataset.n(); ++s) {
      std::size_t coherent = 0;
      for (std::size_t a : sim.dataset.sample_annotations(s)) {
        const auto& id = sim.dataset.workers()[sim.dataset.annotation_worker(a)].worker_id;
        coherent += sim.truth.role_of(id) == Role::kCoherent ? 1 : 0;
      }
      if (2 * coherent > sim.dataset.sample_annotations(s).size()) {
        CHECK(mv.label_at(s) == sim.truth.opinions.at("coherent")[s]);
        ++checked;
      }
    }
    CHECK(checked > 0);
  }

  TEST_CASE("opinion functions flip the declared share of samples one step toward toxic") {
    const auto sim = generate(presets::three_kinds(42));
    const auto& coherent = sim.truth.opinions.at("coherent");
    const auto& minority = sim.truth.opinions.at("minority");
    std::size_t flipped = 0;
    for (std::size_t s = 0; s < coherent.size(); ++s) {
      if (coherent[s] != minority[s]) {
        ++flipped;
        CHECK(minority[s] == coherent[s] - 1);
      }
    }
    CHECK(flipped == 80);
  }

  TEST_CASE("spammer agreement with the MV is 1/|scale| within binomial bounds") {
    CrowdProfile binary = presets::spammer_separation(42);
    binary.n_samples = 400;
    for (const auto& profile : {binary, presets::three_kinds(42)}) {
      const auto sim = generate(profile);
      const auto mv = majority_vote(sim.dataset);
      double agree = 0;
      double total = 0;
      for (const auto& a : sim.dataset.annotations()) {
        if (sim.truth.role_of(a.worker_id) != Role::kSpammer) continue;
        total += 1;
        agree += a.label == mv.label_at(sim.dataset.sample_index(a.sample_id).value()) ? 1 : 0;
      }
      REQUIRE(total >= 200);
      const double p = 1.0 / static_cast<double>(profile.scale.size());
      const double bound = 3.29 * std::sqrt(p * (1 - p) / total);
      CHECK(std::abs(agree / total - p) < bound);
    }
  }

  TEST_CASE("three kinds of crowd: near-zero mode, middle mode, spam tail") {
    const auto sim = generate(presets::three_kinds(42));
    const Dataset& d = sim.dataset;
    const auto table = adr(d, majority_vote(d));
    // Brute-force ADR oracle from raw counts.
    const auto mv = brute_force_mv(d);
    std::map<std::string, std::pair<int, int>> differ;
    for (const auto& a : d.annotations()) {
      auto& [miss, n] = differ[a.worker_id];
      miss += a.label != mv.at(a.sample_id) ? 1 : 0;
      ++n;
    }
    std::map<Role, std::vector<double>> by_role;
    std::vector<std::size_t> histogram(10, 0);
    for (const auto& [id, counts] : differ) {
      const double value = static_cast<double>(counts.first) / counts.second;
      CHECK(table.workers.at(id).adr == doctest::Approx(value).epsilon(1e-15));
      by_role[sim.truth.role_of(id)].push_back(value);
      ++histogram[std::min<std::size_t>(9, static_cast<std::size_t>(value * 10))];
    }
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return v[v.size() / 2];
    };
    CHECK(median(by_role[Role::kCoherent]) < 0.1);
    CHECK(median(by_role[Role::kMinority]) > 0.15);
    CHECK(median(by_role[Role::kMinority]) < 0.45);
    for (double v : by_role[Role::kSpammer]) CHECK(v >= 0.5);
    // Global mode in the lowest bins, a second bump in the middle, and a tail.
    const auto peak = std::max_element(histogram.begin(), histogram.end()) - histogram.begin();
    CHECK(peak <= 1);
    std::size_t mid = 0;
    for (std::size_t b = 2; b < 5; ++b) mid += histogram[b];
    std::size_t tail = 0;
    for (std::size_t b = 6; b < 10; ++b) tail += histogram[b];
    CHECK(mid >= 10);
    CHECK(tail >= 8);
  }

  TEST_CASE("profile JSON round-trip") {
    const CrowdProfile p = presets::polarized(9);
    const CrowdProfile again = CrowdProfile::from_json(p.to_json());
    CHECK(again.to_json() == p.to_json());
    CHECK(generate(again).dataset == generate(p).dataset);
    TempDir dir("profile");
    std::ofstream(dir.file("p.json")) << p.to_json().dump();
    CHECK(load_profile(dir.file("p.json")).to_json() == p.to_json());
  }

  TEST_CASE("invalid and infeasible profiles") {
    CrowdProfile p = noiseless(3);
    p.labels_per_sample = 4;
    CHECK_THROWS_AS(generate(p), InputError);
    p = noiseless(5);
    p.label_weights = {1.0, 2.0};
    CHECK_THROWS_AS(generate(p), InputError);
    p = noiseless(5);
    p.populations[0].mistake_rate = 1.5;
    CHECK_THROWS_AS(generate(p), InputError);
    p = noiseless(5);
    p.populations[0].opinion = "missing";
    CHECK_THROWS_AS(generate(p), InputError);
    // All samples already at the most toxic label: nothing can be flipped.
    p = noiseless(5);
    p.label_weights = {1, 0, 0, 0, 0};
    p.opinions = {{"harsher", 0.5}};
    p.populations.push_back({"minority", Role::kMinority, 2, "harsher", 0.0, {}});
    CHECK_THROWS_AS(generate(p), InputError);
    CHECK_THROWS_AS(CrowdProfile::from_json(nlohmann::json{{"n_samples", 3}}), InputError);
  }

  TEST_CASE("attributes follow the population weights") {
    const auto sim = generate(presets::polarized(42));
    for (const auto& w : sim.dataset.workers()) {
      const auto role = sim.truth.role_of(w.worker_id);
      if (role == Role::kMinority) CHECK(w.attribute("region") == "south");
      if (role == Role::kSpammer) CHECK(w.attribute("region") == "west");
    }
  }
}

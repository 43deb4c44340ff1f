#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "crowdbias/io.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace crowdbias;
using namespace crowdbias::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run cli(const std::string& args, const TempDir& scratch) {
  const std::string log = scratch.file("stdout.txt");
  const std::string command =
      std::string(CROWDBIAS_CLI) + " " + args + " > '" + log + "' 2> '" + scratch.file("stderr.txt") + "'";
  const int status = std::system(command.c_str());
  std::ifstream in(log);
  std::stringstream s;
  s << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, s.str()};
}

std::string data_dir(const char* name) { return std::string(CROWDBIAS_TEST_DATA) + "/" + name; }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 1") {
    TempDir dir("cli_usage");
    CHECK(cli("", dir).code == 1);
    CHECK(cli("frobnicate", dir).code == 1);
    CHECK(cli("quality --data " + data_dir("tiny"), dir).code == 1);
    CHECK(cli("filter --data " + data_dir("tiny") + " --out " + dir.file("f"), dir).code == 1);
    CHECK(cli("--version", dir).code == 0);
  }

  TEST_CASE("invalid input exits 1 and leaves no partial output") {
    TempDir dir("cli_invalid");
    const std::string out = dir.file("never");
    CHECK(cli("quality --data " + dir.file("missing") + " --out " + out, dir).code == 1);
    CHECK_FALSE(fs::exists(out));
    CHECK(cli("report --config " + dir.file("missing.json") + " --out " + out, dir).code == 1);
    CHECK_FALSE(fs::exists(out));
  }

  TEST_CASE("a pipeline stage failure exits 2 and removes the output directory") {
    TempDir dir("cli_stage");
    std::ofstream(dir.file("pipeline.json"))
        << R"({"simulate": {"preset": "three_kinds", "seed": 3}, "setup": 4, "models": ["m1"]})";
    const std::string out = dir.file("report");
    CHECK(cli("report --config " + dir.file("pipeline.json") + " --out " + out, dir).code == 2);
    CHECK_FALSE(fs::exists(out));
    const std::string sim = dir.file("sim");
    REQUIRE(cli("simulate --preset three_kinds --seed 3 --out " + sim, dir).code == 0);
    CHECK(cli("train --data " + sim + " --setup 4 --model m1 --out " + dir.file("m"), dir).code == 1);
    CHECK_FALSE(fs::exists(dir.file("m")));
  }

  TEST_CASE("train writes a model file; predict scores listed pairs") {
    TempDir dir("cli_files");
    const std::string sim = dir.file("sim");
    REQUIRE(cli("simulate --preset spammer_separation --seed 1 --out " + sim, dir).code == 0);
    REQUIRE(cli("train --data " + sim + " --model 2 --epochs 2 --out " + dir.file("m/model2.bin"), dir)
                .code == 0);
    CHECK(fs::exists(dir.file("m/model2.bin")));
    CHECK(fs::exists(dir.file("m/model2.split.json")));
    std::ofstream(dir.file("pairs.csv")) << "sample_id,worker_id\ns001,w001\ns002,w002\n";
    REQUIRE(cli("predict --data " + sim + " --model-file " + dir.file("m/model2.bin") + " --in " +
                    dir.file("pairs.csv") + " --out " + dir.file("preds.csv"),
                dir)
                .code == 0);
    std::ifstream in(dir.file("preds.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "sample_id,worker_id,prediction");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 2);
    std::ofstream(dir.file("ghost.csv")) << "sample_id,worker_id\nnope,w001\n";
    CHECK(cli("predict --data " + sim + " --model-file " + dir.file("m/model2.bin") + " --in " +
                  dir.file("ghost.csv") + " --out " + dir.file("ghost_preds.csv"),
              dir)
              .code == 1);
    CHECK_FALSE(fs::exists(dir.file("ghost_preds.csv")));
  }

  TEST_CASE("full command flow on a simulated crowd") {
    TempDir dir("cli_flow");
    const std::string sim = dir.file("sim");
    REQUIRE(cli("simulate --preset polarized --seed 42 --out " + sim, dir).code == 0);
    CHECK(fs::exists(sim + "/annotations.csv"));
    CHECK(fs::exists(sim + "/profile.json"));

    const auto ingest = cli("ingest --data " + sim + " --out " + dir.file("ingested"), dir);
    CHECK(ingest.code == 0);
    CHECK(fs::exists(dir.file("ingested/distribution.json")));

    CHECK(cli("aggregate --data " + sim + " --out " + dir.file("agg"), dir).code == 0);
    CHECK(fs::exists(dir.file("agg/majority_vote.csv")));

    const auto quality = cli("quality --data " + sim + " --out " + dir.file("q"), dir);
    REQUIRE(quality.code == 0);
    CHECK(quality.out.find("converged yes") != std::string::npos);
    const auto scores = read_json_file(dir.file("q/scores.json"));
    CHECK(scores.contains("wqs"));

    const auto filtered = cli("filter --data " + sim + " --scores " + dir.file("q/scores.json") +
                                  " --threshold 0.45 --out " + dir.file("filtered"),
                              dir);
    REQUIRE(filtered.code == 0);
    CHECK(filtered.out.find("removed 10 of 100 workers") != std::string::npos);
    const std::string clean = dir.file("filtered");

    for (const char* m : {"m1", "m2"}) {
      const auto trained = cli("train --data " + clean + " --model " + std::string(m) +
                                   " --epochs 5 --out " + dir.file(m),
                               dir);
      REQUIRE(trained.code == 0);
      CHECK(fs::exists(dir.file(std::string(m) + "/model.bin")));
      CHECK(fs::exists(dir.file(std::string(m) + "/split.json")));
    }

    CHECK(cli("predict --data " + clean + " --model " + dir.file("m1/model.bin") + " --out " +
                  dir.file("pred"),
              dir)
              .code == 0);
    CHECK(fs::exists(dir.file("pred/predictions.csv")));

    const std::string models = " --model " + dir.file("m1/model.bin") + " --model " +
                               dir.file("m2/model.bin") + " --model oracle";
    const auto evaluated = cli("evaluate --data " + clean + models +
                                   " --grouping adr:5 --grouping attr:region --out " +
                                   dir.file("eval"),
                               dir);
    REQUIRE(evaluated.code == 0);
    const auto bias = read_json_file(dir.file("eval/bias.json"));
    REQUIRE(bias.size() == 2);
    CHECK(bias[0].at("results").size() == 3);
    CHECK(bias[0].at("results")[2].at("disp") == 1.0);

    CHECK(cli("matrix --data " + clean + models + " --grouping attr:region --out " +
                  dir.file("matrix"),
              dir)
              .code == 0);
    CHECK(fs::exists(dir.file("matrix/matrix_attr_region.csv")));

    std::ofstream(dir.file("judge.csv")) << "entity_id,score\nw001,1\nw002,0\n";
    CHECK(cli("validate --scores " + dir.file("q/scores.json") + " --worker-judgements " +
                  dir.file("judge.csv") + " --out " + dir.file("validation.json"),
              dir)
              .code == 0);
    CHECK(fs::exists(dir.file("validation.json")));

    const auto reported = cli("report --config " + data_dir("pipeline_polarized.json") +
                                  " --plots --out " + dir.file("report"),
                              dir);
    REQUIRE(reported.code == 0);
    CHECK(fs::exists(dir.file("report/report.json")));
    CHECK(fs::exists(dir.file("report/summary.txt")));
    CHECK(fs::exists(dir.file("report/plots/heatmap_attr_region.svg")));

    const auto plotted =
        cli("plots --report " + dir.file("report/report.json") + " --out " + dir.file("plots"), dir);
    CHECK(plotted.code == 0);
    CHECK(fs::exists(dir.file("plots/wqs_histogram.svg")));
  }

  TEST_CASE("report seed override changes the run; same seed reproduces it") {
    TempDir dir("cli_seed");
    const std::string config = data_dir("pipeline_polarized.json");
    REQUIRE(cli("report --config " + config + " --seed 7 --out " + dir.file("a"), dir).code == 0);
    REQUIRE(cli("report --config " + config + " --seed 7 --out " + dir.file("b"), dir).code == 0);
    REQUIRE(cli("report --config " + config + " --seed 8 --out " + dir.file("c"), dir).code == 0);
    const auto a = read_json_file(dir.file("a/report.json")).at("body");
    const auto b = read_json_file(dir.file("b/report.json")).at("body");
    const auto c = read_json_file(dir.file("c/report.json")).at("body");
    CHECK(a == b);
    CHECK(a != c);
    CHECK(a.at("config").at("split").at("seed") == 7);
  }

  TEST_CASE("--config supplies option defaults; the command line wins") {
    TempDir dir("cli_config");
    const std::string sim = dir.file("sim");
    REQUIRE(cli("simulate --preset spammer_separation --out " + sim, dir).code == 0);
    std::ofstream(dir.file("opts.json"))
        << R"({"data": ")" << sim << R"(", "threshold": 0.99, "force": true, "out": ")"
        << dir.file("from_config") << R"("})";
    const auto a = cli("filter --config " + dir.file("opts.json"), dir);
    REQUIRE(a.code == 0);
    CHECK(fs::exists(dir.file("from_config/removed_workers.csv")));
    const auto b =
        cli("filter --config " + dir.file("opts.json") + " --threshold 0 --out " + dir.file("cli"), dir);
    REQUIRE(b.code == 0);
    CHECK(b.out.find("removed 0 of") != std::string::npos);
    std::ofstream(dir.file("bad.json")) << "{not json";
    CHECK(cli("filter --config " + dir.file("bad.json"), dir).code == 1);
  }
}

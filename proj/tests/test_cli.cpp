#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "tscm/ablation.hpp"
#include "tscm/cli.hpp"

using namespace tscm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome call(std::vector<std::string> args) {
  args.insert(args.begin(), "tscm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(int(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tscm_cli_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(call({}).code == cli::kExitUsage);
  CHECK(call({"frobnicate"}).code == cli::kExitUsage);
  CHECK(call({"analyze", "--frames", "abc"}).code == cli::kExitUsage);
  CHECK(call({"analyze", "--temporal", "4d"}).code == cli::kExitUsage);
  CHECK(call({"analyze", "--mode", "sideways"}).code == cli::kExitUsage);
  CHECK(call({"ablate", "--axis", "depth"}).code == cli::kExitUsage);
}

TEST_CASE("help lists every flag") {
  auto top = call({"--help"});
  CHECK(top.code == cli::kExitOk);
  for (const char* s : {"--seed", "--out-dir", "--config", "generate", "train", "eval", "analyze", "compare", "bench",
                        "ablate", "equivcheck"})
    CHECK(top.out.find(s) != std::string::npos);
  auto tr = call({"train", "--help"});
  CHECK(tr.code == cli::kExitOk);
  for (const char* s : {"--data", "--epochs", "--lr", "--p-stop", "--ctc-levels", "--preset", "--temporal", "--mode"})
    CHECK(tr.out.find(s) != std::string::npos);
}

TEST_CASE("analyze writes the cost report") {
  const auto dir = scratch("analyze");
  auto r = call({"--out-dir", dir.string(), "analyze", "--preset", "resnett34", "--input", "224x224", "--frames", "200",
                 "--temporal", "tscm"});
  REQUIRE(r.code == cli::kExitOk);
  auto j = read_json(dir / "cost.json");
  CHECK(std::abs(j["params"].get<double>() / 22.0e6 - 1) < 0.05);
  CHECK(fs::exists(dir / "cost_layers.csv"));
  r = call({"--out-dir", dir.string(), "analyze", "--preset", "resnett34", "--input", "224x224", "--frames", "200",
            "--temporal", "3d"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(std::abs(read_json(dir / "cost.json")["params"].get<double>() / 57.4e6 - 1) < 0.05);
  CHECK(call({"--out-dir", dir.string(), "analyze", "--frames", "0"}).code == cli::kExitUsage);
  fs::remove_all(dir);
}

TEST_CASE("compare prints and writes the table") {
  const auto dir = scratch("compare");
  auto r = call({"--out-dir", dir.string(), "compare", "--input", "224x224"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(count_lines(dir / "compare.csv") == 5);
  CHECK(r.out.find("network,variant") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("equivcheck") {
  const auto dir = scratch("equiv");
  auto ok = call({"--out-dir", dir.string(), "equivcheck"});
  CHECK(ok.code == cli::kExitOk);
  CHECK(read_json(dir / "equivcheck.json")["pass"].get<bool>());
  CHECK(call({"--out-dir", dir.string(), "equivcheck", "--corrupt"}).code == cli::kExitFailure);
  auto none = call({"--out-dir", dir.string(), "equivcheck", "--trials", "0"});
  CHECK(none.code == cli::kExitOk);
  CHECK(none.err.find("warning") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("missing dataset fails with a message") {
  const auto dir = scratch("missing");
  auto r = call({"--out-dir", dir.string(), "train", "--data", (dir / "nowhere").string()});
  CHECK(r.code != cli::kExitOk);
  CHECK(r.err.find("manifest") != std::string::npos);
  r = call({"--out-dir", dir.string(), "eval", "--data", (dir / "nowhere").string(), "--checkpoint", dir.string()});
  CHECK(r.code != cli::kExitOk);
  fs::remove_all(dir);
}

TEST_CASE("generate, train, eval, bench and ablate end to end") {
  const auto root = scratch("e2e");
  const auto data = (root / "data").string();
  REQUIRE(call({"--seed", "4", "--out-dir", data, "generate", "--vocab", "8", "--sentences", "30"}).code == cli::kExitOk);
  CHECK(count_lines(root / "data" / "manifest.jsonl") == 30);

  const auto run = (root / "run").string();
  auto tr = call({"--out-dir", run, "train", "--data", data, "--epochs", "1", "--max-steps", "2"});
  REQUIRE(tr.code == cli::kExitOk);
  CHECK(fs::exists(root / "run" / "best" / "spec.txt"));
  CHECK(fs::exists(root / "run" / "train.json"));

  const auto ev = (root / "eval").string();
  auto e = call({"--out-dir", ev, "eval", "--checkpoint", run + "/best", "--data", data, "--split", "dev"});
  REQUIRE(e.code == cli::kExitOk);
  CHECK(read_json(root / "eval" / "eval.json").contains("wer"));
  CHECK(fs::exists(root / "eval" / "report.csv"));
  CHECK(call({"--out-dir", ev, "eval", "--checkpoint", run + "/best", "--data", data, "--decoder", "viterbi"}).code ==
        cli::kExitUsage);

  const auto bn = (root / "bench").string();
  auto b = call({"--out-dir", bn, "bench", "--repeats", "1", "--frames", "8"});
  REQUIRE(b.code == cli::kExitOk);
  CHECK(count_lines(root / "bench" / "bench.csv") == 5);
  CHECK(b.out.find("informational") != std::string::npos);

  const auto ab = (root / "ablate").string();
  auto a = call({"--out-dir", ab, "ablate", "--data", data, "--axis", "ctc_levels", "--values", "1,2,3", "--epochs", "1",
                 "--max-steps", "1", "--parallel", "3"});
  REQUIRE(a.code == cli::kExitOk);
  CHECK(count_lines(root / "ablate" / "ablation.csv") == 4);
  CHECK(fs::exists(root / "ablate" / "ctc_levels.svg"));
  CHECK(call({"--out-dir", ab, "ablate", "--data", data, "--axis", "channel_span", "--values", "4"}).code ==
        cli::kExitUsage);
  fs::remove_all(root);
}

TEST_CASE("ablation axes cover the studied ranges") {
  using ablate::Axis;
  CHECK(ablate::standard_values(Axis::superposition) ==
        std::vector<std::string>{"tsm", "superposition", "crossover", "random"});
  CHECK(ablate::standard_values(Axis::ctc_levels) == std::vector<std::string>{"1", "2", "3"});
  CHECK(ablate::standard_values(Axis::resblockt_count) == std::vector<std::string>{"4", "5", "6", "7", "8"});
  CHECK(ablate::standard_values(Axis::channel_span) == std::vector<std::string>{"3", "5", "7"});
  CHECK(ablate::standard_values(Axis::temporal_pools) == std::vector<std::string>{"0", "1", "2", "3"});
  CHECK(ablate::standard_values(Axis::model_size) == std::vector<std::string>{"34", "50", "101"});
  for (auto a : ablate::all_axes()) CHECK(ablate::parse_axis(ablate::axis_name(a)) == a);
  ablate::AblationPlan p;
  p.axis = Axis::resblockt_count;
  p.values = {"9"};
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p.values = {"6"};
  CHECK(ablate::spec_for(p, "6", 9).replaced_tail_blocks == 6);
}

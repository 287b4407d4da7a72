#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "scenario_rag/cli.hpp"
#include "scenario_rag/error.hpp"
#include "test_support.hpp"

using namespace scenario_rag;
using namespace scenario_rag::testing;

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code;
  std::string out, err;
};

RunResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "scenario-rag");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small enough that the whole pipeline runs in a few seconds.
fs::path write_small_config(const TempDir& dir) {
  nlohmann::json j = {
      {"generator", {{"scenarios_per_cluster", 6}}},
      {"model", {{"hidden_dim", 16}, {"latent_dim", 8}, {"heads", 4}, {"decoder_hidden", 16}}},
      {"train", {{"epochs", 2}, {"batch_size", 6}}},
      {"eval", {{"queries_per_cluster", 2}}},
  };
  const fs::path p = dir / "small.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("config json round-trip") {
  cli::PipelineConfig cfg;
  cli::apply_seed(cfg, 42);
  cfg.model.hidden_dim = 32;
  cfg.train.epochs = 7;
  cfg.eval.query_seed = 9;
  cfg.bench.sizes = {10, 20};
  const auto j = cli::to_json(cfg);
  const cli::PipelineConfig back = cli::from_json(nlohmann::json::parse(j.dump()));
  CHECK(cli::to_json(back) == j);
  CHECK(back.generator.seed == 42);
  CHECK(back.train.seed == 42);
  CHECK(cli::query_seed(back) == 9);
  cfg.eval.query_seed.reset();
  CHECK(cli::query_seed(cfg) != cfg.seed);
}

TEST_CASE("config: partial overlay, unknown keys, wrong types") {
  const cli::PipelineConfig cfg = cli::from_json({{"train", {{"epochs", 3}}}});
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.model.hidden_dim == cli::PipelineConfig{}.model.hidden_dim);
  for (const auto& bad : {nlohmann::json{{"trian", {}}}, nlohmann::json{{"train", {{"epoch", 3}}}},
                          nlohmann::json{{"train", {{"epochs", "three"}}}}}) {
    try {
      cli::from_json(bad);
      FAIL("expected ValidationError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kValidation);
    }
  }
}

TEST_CASE("dump-config: flags override the file, the file overrides defaults") {
  TempDir dir("cli_precedence");
  const fs::path cfg = dir / "c.json";
  std::ofstream(cfg) << R"({"seed": 5, "train": {"epochs": 4, "batch_size": 9}})";
  const RunResult r = run_cli({"--config", cfg.string(), "--dump-config", "train-embed", "--epochs", "11"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["train"]["epochs"] == 11);
  CHECK(j["train"]["batch_size"] == 9);
  CHECK(j["seed"] == 5);
  CHECK(j["model"]["hidden_dim"] == cli::PipelineConfig{}.model.hidden_dim);
  const RunResult seeded = run_cli({"--config", cfg.string(), "--seed", "8", "--dump-config"});
  CHECK(nlohmann::json::parse(seeded.out)["seed"] == 8);
}

TEST_CASE("exit codes") {
  TempDir dir("cli_codes");
  CHECK(run_cli({"--help"}).code == 0);
  CHECK(run_cli({"no-such-command"}).code == 1);
  CHECK(run_cli({"--out", dir.path().string()}).code == 1);
  CHECK(run_cli({"--out", dir.path().string(), "gen-data", "--per-cluster", "0"}).code == 1);
  const RunResult missing = run_cli({"--out", dir.path().string(), "dtw-matrix", "--dataset", (dir / "nope.jsonl").string()});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("IoError") != std::string::npos);
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK(run_cli({"--config", (dir / "bad.json").string(), "--dump-config"}).code == 1);
}

TEST_CASE("gen-data is byte-identical across runs") {
  TempDir a("cli_gen_a"), b("cli_gen_b");
  REQUIRE(run_cli({"--out", a.path().string(), "gen-data", "--per-cluster", "4"}).code == 0);
  REQUIRE(run_cli({"--out", b.path().string(), "gen-data", "--per-cluster", "4"}).code == 0);
  CHECK(slurp(a / "dataset.jsonl") == slurp(b / "dataset.jsonl"));
  CHECK(slurp(a / "labels.csv") == slurp(b / "labels.csv"));
  CHECK(!slurp(a / "dataset.jsonl").empty());
}

TEST_CASE("small pipeline end to end") {
  TempDir dir("cli_pipeline");
  const std::string cfg = write_small_config(dir).string();
  const std::string out = dir.path().string();
  auto step = [&](std::vector<std::string> args) {
    args.insert(args.begin(), {"--config", cfg, "--out", out});
    const RunResult r = run_cli(args);
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    return r;
  };
  step({"gen-data"});
  step({"dtw-matrix"});
  step({"train-embed"});
  step({"embed"});
  step({"build-index"});
  for (const char* f : {"dataset.jsonl", "labels.csv", "distances.csv", "checkpoint.saem", "losses.csv",
                        "vectors.csv", "index.vidx"})
    CHECK(fs::exists(dir / f));

  // 18 scenarios indexed; k beyond that lists the full index.
  const RunResult q = step({"query", "--scenario", "s0-0001", "-k", "50"});
  std::istringstream lines(q.out);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "query_id,rank,scenario_id,distance");
  int rows = 0;
  std::string first;
  while (std::getline(lines, line)) {
    if (rows == 0) first = line;
    ++rows;
  }
  CHECK(rows == 18);
  CHECK(first.rfind("s0-0001,1,s0-0001,", 0) == 0);

  const RunResult unknown = run_cli({"--config", cfg, "--out", out, "query", "--scenario", "zz-9999"});
  CHECK(unknown.code == 1);

  const RunResult gbr = step({"eval-retrieval", "--mode", "gbr", "-k", "3"});
  CHECK(gbr.out.rfind("mode,k,queries,recall\ngbr,3,6,", 0) == 0);
  CHECK(slurp(dir / "retrieval_gbr.csv") == gbr.out);
  step({"eval-retrieval", "--mode", "vsr"});

  const RunResult bench = step({"bench", "--sizes", "50,100", "--queries", "5", "--dim", "4"});
  CHECK(bench.out.rfind("size,mean_us,p99_us\n50,", 0) == 0);
  const std::string answers = slurp(dir / "bench_answers.csv");
  step({"bench", "--sizes", "50,100", "--queries", "5", "--dim", "4"});
  CHECK(slurp(dir / "bench_answers.csv") == answers);
  CHECK(run_cli({"--out", out, "bench", "--sizes", "100,50"}).code == 1);
}

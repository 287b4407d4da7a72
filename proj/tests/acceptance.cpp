// Acceptance run: one PASS/FAIL line per criterion. Pass criterion names
// (AC-1 ... AC-9) as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>

#include "dtw_oracle.hpp"
#include "scenario_rag/csv.hpp"
#include "scenario_rag/gradient_suite.hpp"
#include "scenario_rag/graph_distance.hpp"
#include "scenario_rag/retrieval.hpp"
#include "scenario_rag/synth.hpp"
#include "scenario_rag/trainer.hpp"
#include "test_support.hpp"

using namespace scenario_rag;
using namespace scenario_rag::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double v) { return format_double(v); }

Outcome ac1_dtw_vs_brute_force() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  const FrameDistanceWeights w;
  double worst = 0.0;
  int pairs = 0;
  for (; pairs < 200; ++pairs) {
    const auto a = random_scenario(rng, static_cast<int>(rng.uniform_int(1, 5)), "a");
    const auto b = random_scenario(rng, static_cast<int>(rng.uniform_int(1, 5)), "b");
    const double fast = graph_dtw(a, b, w);
    worst = std::max({worst, std::abs(fast - dtw_brute_force(a, b, w)), std::abs(fast - oracle_dtw(a, b, w))});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 30.0,
          "pairs=" + std::to_string(pairs) + " max_abs_diff=" + fmt(worst) + " seconds=" + fmt(secs)};
}

Outcome ac2_gradients() {
  const auto t0 = Clock::now();
  SuiteOptions opt;
  opt.points = 10;
  const auto rows = run_gradient_suite(opt);
  const double secs = seconds_since(t0);
  bool all = rows.size() == 7;
  std::string detail;
  for (const auto& r : rows) {
    all = all && r.pass && r.checked > 0 && r.max_rel_error < 1e-4;
    detail += r.objective + "=" + fmt(r.max_rel_error) + " ";
  }
  return {all && secs < 120.0, detail + "seconds=" + fmt(secs)};
}

// Shared state for the training and retrieval criteria.
struct Experiment {
  LabeledDataset train;
  DistanceMatrix dm;
  std::vector<ScenarioPrimitive> queries;
  TrainConfig cfg;
  ModelConfig model;
  std::optional<TrainResult> full, rec_only;
  double train_seconds = 0.0;

  Experiment() {
    train = generate_dataset(default_generator_config(1));
    dm = distance_matrix(train.scenarios);
    GeneratorConfig q = default_generator_config(777);
    q.scenarios_per_cluster = 30;
    q.id_prefix = "q";
    queries = generate_dataset(q).scenarios;
  }

  const TrainResult& full_model() {
    if (!full) {
      const auto t0 = Clock::now();
      full = train_embedding(train, dm, cfg, model);
      train_seconds = seconds_since(t0);
    }
    return *full;
  }

  const TrainResult& rec_model() {
    if (!rec_only) {
      TrainConfig c = cfg;
      c.weights.lambda_a = 0.0;
      rec_only = train_embedding(train, dm, c, model);
    }
    return *rec_only;
  }

  std::int64_t cluster(const ScenarioPrimitive& s) const { return std::stoll(s.metadata.at("cluster")); }

  double gbr_recall(const EncoderParams& params) const {
    std::vector<Embedding> entries;
    for (const auto& s : train.scenarios) entries.emplace_back(s.scenario_id, encode(s, params, model));
    const VectorIndex idx = build_index(entries);
    std::vector<LabeledQuery> q;
    for (const auto& s : queries) q.push_back({s.scenario_id, encode(s, params, model), cluster(s)});
    return recall_at_k(idx, train.labels, q, 10);
  }

  double vsr_recall() const {
    std::vector<Embedding> entries;
    for (const auto& s : train.scenarios) entries.emplace_back(s.scenario_id, visual_feature(s));
    IndexMetadata meta;
    meta.metric = Metric::kCosine;
    const VectorIndex idx = build_index(entries, meta);
    std::vector<LabeledQuery> q;
    for (const auto& s : queries) q.push_back({s.scenario_id, visual_feature(s), cluster(s)});
    return recall_at_k(idx, train.labels, q, 10);
  }
};

Outcome ac3_training(Experiment& ex) {
  const StageOneEval before = evaluate_stage1(ex.train, ex.dm, init_params(ex.model, ex.cfg.seed), ex.cfg, ex.model);
  const TrainResult& r = ex.full_model();
  const StageOneEval after = evaluate_stage1(ex.train, ex.dm, r.params, ex.cfg, ex.model);
  const double ratio = after.align / before.align;
  return {ratio <= 0.2 && after.mean_iou >= 0.9 && ex.train_seconds < 900.0,
          "epochs=" + std::to_string(ex.cfg.epochs) + " align_before=" + fmt(before.align) +
              " align_after=" + fmt(after.align) + " ratio=" + fmt(ratio) + " soft_iou=" + fmt(after.mean_iou) +
              " seconds=" + fmt(ex.train_seconds)};
}

Outcome ac4_recall(Experiment& ex) {
  const double recall = ex.gbr_recall(ex.full_model().params);
  return {recall >= 0.9, "queries=" + std::to_string(ex.queries.size()) + " recall@10=" + fmt(recall)};
}

Outcome ac5_gbr_vs_vsr(Experiment& ex) {
  const double gbr = ex.gbr_recall(ex.full_model().params);
  const double vsr = ex.vsr_recall();
  return {gbr - vsr >= 0.15, "gbr=" + fmt(gbr) + " vsr=" + fmt(vsr) + " gap=" + fmt(gbr - vsr)};
}

Outcome ac6_ablation(Experiment& ex) {
  const double full = ex.gbr_recall(ex.full_model().params);
  const double rec = ex.gbr_recall(ex.rec_model().params);
  return {full >= rec, "emb_full=" + fmt(full) + " emb_rec=" + fmt(rec)};
}

QueryResult scan(const VectorIndex& idx, const std::vector<double>& q, std::size_t k) {
  QueryResult all;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto v = idx.vector(i);
    double s = 0;
    for (std::size_t d = 0; d < q.size(); ++d) s += (q[d] - v[d]) * (q[d] - v[d]);
    all.push_back({idx.ids()[i], std::sqrt(s)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

Outcome ac7_index_vs_scan() {
  Rng rng(77);
  const std::size_t dim = 64;
  std::vector<Embedding> entries;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.uniform(-1, 1);
    entries.emplace_back("v" + std::to_string(i), std::move(v));
  }
  const VectorIndex idx = build_index(entries);
  TempDir dir("acceptance_index");
  save_index(idx, dir / "i.vidx");
  const VectorIndex loaded = load_index(dir / "i.vidx");
  int mismatches = 0;
  for (int q = 0; q < 100; ++q) {
    std::vector<double> query(dim);
    for (double& x : query) x = rng.uniform(-1, 1);
    const QueryResult expected = scan(idx, query, 10);
    if (idx.query_topk(query, 10) != expected) ++mismatches;
    if (loaded.query_topk(query, 10) != expected) ++mismatches;
  }
  return {mismatches == 0, "vectors=10000 queries=100 mismatches=" + std::to_string(mismatches)};
}

Outcome ac8_bench() {
  const auto rows = bench_latency({1000, 10000, 100000}, 200, 64, 1);
  bool monotone = rows.size() == 3;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i].mean_us < 0.9 * rows[i - 1].mean_us) monotone = false;
    detail += std::to_string(rows[i].size) + ":" + fmt(rows[i].mean_us) + "us ";
  }
  TempDir dir("acceptance_bench");
  write_bench_csv(rows, dir / "bench.csv");
  bool csv_ok = false;
  try {
    const auto back = read_bench_csv(dir / "bench.csv");
    csv_ok = back.size() == rows.size();
    for (std::size_t i = 0; csv_ok && i < rows.size(); ++i)
      csv_ok = back[i].size == rows[i].size && back[i].mean_us == rows[i].mean_us && back[i].p99_us == rows[i].p99_us;
  } catch (const std::exception&) {
  }
  return {monotone && csv_ok, detail + "csv=" + (csv_ok ? "ok" : "bad")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome ac9_cli_determinism() {
  TempDir root("acceptance_cli");
  std::ofstream(root / "small.json") << R"({
  "generator": {"scenarios_per_cluster": 8},
  "model": {"hidden_dim": 16, "latent_dim": 8, "heads": 4, "decoder_hidden": 16},
  "train": {"epochs": 3, "batch_size": 8},
  "eval": {"queries_per_cluster": 3},
  "bench": {"sizes": [100, 200], "queries": 10, "dim": 8}
})";
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"gen-data", "gen-data"},
      {"dtw-matrix", "dtw-matrix"},
      {"train-embed", "train-embed"},
      {"embed", "embed"},
      {"build-index", "build-index"},
      {"query", "query --scenario s1-0002 -k 5"},
      {"bench", "bench"},
      {"eval-retrieval-gbr", "eval-retrieval --mode gbr"},
      {"eval-retrieval-vsr", "eval-retrieval --mode vsr"},
      {"eval-ablation", "eval-ablation"},
      {"grad-check", "grad-check --points 1 --coords 20"},
  };
  // Both runs use the same relative output directory so printed paths agree.
  for (const char* run : {"a", "b"}) {
    fs::create_directories(root / run);
    for (const auto& [name, args] : steps) {
      const std::string cmd = "cd '" + (root / run).string() + "' && SOURCE_DATE_EPOCH=1700000000 '" +
                              SCENARIO_RAG_CLI + "' --config ../small.json --out out " + args + " > stdout_" + name +
                              ".txt 2> stderr_" + name + ".txt";
      if (std::system(cmd.c_str()) != 0) return {false, "step " + name + " failed in run " + run};
    }
  }
  std::vector<std::string> differing;
  int compared = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), root / "a");
    // Timing outputs; bench_answers.csv carries the deterministic part.
    if (rel == "out/bench.csv" || rel == "stdout_bench.txt") continue;
    ++compared;
    if (slurp(entry.path()) != slurp(root / "b" / rel)) differing.push_back(rel.string());
  }
  std::string detail = "files_compared=" + std::to_string(compared);
  for (const auto& d : differing) detail += " differs:" + d;
  return {differing.empty() && compared > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const std::string& name) { return only.empty() || only.count(name) > 0; };

  Experiment* ex = nullptr;
  std::optional<Experiment> storage;
  auto experiment = [&]() -> Experiment& {
    if (!ex) ex = &storage.emplace();
    return *ex;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"AC-1", ac1_dtw_vs_brute_force},
      {"AC-2", ac2_gradients},
      {"AC-3", [&] { return ac3_training(experiment()); }},
      {"AC-4", [&] { return ac4_recall(experiment()); }},
      {"AC-5", [&] { return ac5_gbr_vs_vsr(experiment()); }},
      {"AC-6", [&] { return ac6_ablation(experiment()); }},
      {"AC-7", ac7_index_vs_scan},
      {"AC-8", ac8_bench},
      {"AC-9", ac9_cli_determinism},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!wanted(name)) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << name << ' ' << (o.pass ? "PASS" : "FAIL") << ' ' << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}

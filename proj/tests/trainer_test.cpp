#include <doctest.h>

#include <cmath>

#include "scenario_rag/error.hpp"
#include "scenario_rag/gradient_suite.hpp"
#include "scenario_rag/trainer.hpp"
#include "test_support.hpp"

using namespace scenario_rag;
using namespace scenario_rag::testing;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.hidden_dim = 16;
  cfg.latent_dim = 8;
  cfg.heads = 4;
  cfg.decoder_hidden = 16;
  return cfg;
}

struct Fixture {
  LabeledDataset ds;
  DistanceMatrix dm;
  Fixture() {
    GeneratorConfig g = default_generator_config(1);
    g.scenarios_per_cluster = 6;
    ds = generate_dataset(g);
    dm = distance_matrix(ds.scenarios);
  }
};

TrainConfig short_run(int epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 6;
  cfg.learning_rate = 3e-3;
  return cfg;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(check_config(cfg));
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(check_config(cfg), Error);
  cfg = {};
  cfg.epochs = -1;
  CHECK_THROWS_AS(check_config(cfg), Error);
  cfg = {};
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(check_config(cfg), Error);
}

TEST_CASE("zero epochs return the initialization") {
  const Fixture f;
  const TrainResult r = train_embedding(f.ds, f.dm, short_run(0), tiny_model());
  CHECK(r.history.empty());
  CHECK(r.params == init_params(tiny_model(), 1));
}

TEST_CASE("training is deterministic and lowers the objective") {
  const Fixture f;
  const TrainConfig cfg = short_run(15);
  std::vector<EpochLoss> seen;
  const TrainResult a = train_embedding(f.ds, f.dm, cfg, tiny_model(), [&](const EpochLoss& e) { seen.push_back(e); });
  const TrainResult b = train_embedding(f.ds, f.dm, cfg, tiny_model());
  REQUIRE(a.history.size() == 15);
  CHECK(seen.size() == 15);
  CHECK(a.params == b.params);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].epoch == static_cast<int>(i));
    CHECK(a.history[i].total == b.history[i].total);
    CHECK(a.history[i].total == doctest::Approx(a.history[i].restore + a.history[i].align));
  }
  const StageOneEval before = evaluate_stage1(f.ds, f.dm, init_params(tiny_model(), 1), cfg, tiny_model());
  const StageOneEval after = evaluate_stage1(f.ds, f.dm, a.params, cfg, tiny_model());
  CHECK(after.restore + after.align < before.restore + before.align);
  CHECK(after.mean_iou == doctest::Approx(1.0 - after.restore));
}

TEST_CASE("restoration-only training ignores the alignment term") {
  const Fixture f;
  TrainConfig cfg = short_run(3);
  cfg.weights.lambda_a = 0.0;
  const TrainResult r = train_embedding(f.ds, f.dm, cfg, tiny_model());
  for (const auto& e : r.history) CHECK(e.total == doctest::Approx(e.restore));
  // Same seed, so the starting point matches the full variant.
  CHECK(train_embedding(f.ds, f.dm, short_run(0), tiny_model()).params == init_params(tiny_model(), cfg.seed));
}

TEST_CASE("divergence is reported with its epoch") {
  const Fixture f;
  TrainConfig cfg = short_run(5);
  cfg.learning_rate = 1e200;
  try {
    train_embedding(f.ds, f.dm, cfg, tiny_model());
    FAIL("expected NumericalDivergence");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumericalDivergence);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("alignment targets are scaled by the percentile") {
  const Fixture f;
  const Matrix t = alignment_targets(f.ds.scenarios, f.dm, 95.0);
  const double p95 = upper_percentile(f.dm, 95.0);
  CHECK(t(0, 1) == doctest::Approx(f.dm.at(0, 1) / p95));
  CHECK(t.diagonal().isZero());
  std::vector<ScenarioPrimitive> extra = f.ds.scenarios;
  extra[0].scenario_id = "stranger";
  try {
    alignment_targets(extra, f.dm, 95.0);
    FAIL("expected UnknownId");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownId);
  }
}

TEST_CASE("loss csv round-trip") {
  TempDir dir("losses");
  const std::vector<EpochLoss> h = {{1, 0.5, 0.25, 0.75}, {2, 0.1, 1.0 / 3.0, 0.1 + 1.0 / 3.0}};
  write_loss_csv(h, dir / "l.csv");
  const auto back = read_loss_csv(dir / "l.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].align == h[1].align);
  CHECK(back[1].total == h[1].total);
}

TEST_CASE("gradient suite passes on a reduced run") {
  SuiteOptions opt;
  opt.points = 2;
  opt.coordinates = 40;
  opt.model = tiny_model();
  const auto rows = run_gradient_suite(opt);
  CHECK(rows.size() == 7);
  for (const auto& r : rows) {
    CAPTURE(r.objective);
    CHECK(r.pass);
    CHECK(r.checked > 0);
    CHECK(r.max_rel_error < 1e-4);
  }
}

#include "scenario_rag/gradient_suite.hpp"

#include <memory>

#include "scenario_rag/graph_distance.hpp"
#include "scenario_rag/objectives.hpp"
#include "scenario_rag/random.hpp"
#include "scenario_rag/synth.hpp"

namespace scenario_rag {

namespace {

struct Stage1State {
  std::vector<ScenarioInputs> batch;
  Matrix targets;
  EncoderParams params;
  StageOneWeights weights;
  ModelConfig cfg;
  std::vector<double> last_point;
  std::uint64_t last_regime = 0;

  // Forward pass at x; returns the loss and caches the regime signature.
  double evaluate(std::span<const double> x, std::vector<double>* grad) {
    params.assign(x);
    ad::Tape tape;
    const ParamVars pv = register_params(tape, params, grad != nullptr);
    std::vector<const ScenarioInputs*> ptrs;
    for (const auto& in : batch) ptrs.push_back(&in);
    const BatchLoss loss = stage1_batch_loss(tape, pv, ptrs, targets, weights, cfg);
    last_point.assign(x.begin(), x.end());
    last_regime = tape.kink_signature();
    const double value = tape.value(loss.total)(0, 0);
    if (grad) {
      tape.backward(loss.total);
      grad->clear();
      for (const ad::Var v : pv.vars) {
        const Matrix g = tape.grad(v);
        for (Eigen::Index r = 0; r < g.rows(); ++r)
          for (Eigen::Index c = 0; c < g.cols(); ++c) grad->push_back(g(r, c));
      }
    }
    return value;
  }
};

SuiteRow summarize(std::string name, const std::vector<GradCheckReport>& reports, double tolerance) {
  SuiteRow row{std::move(name), static_cast<int>(reports.size()), 0, 0, 0.0, true};
  for (const auto& r : reports) {
    row.checked += r.checked;
    row.skipped += r.skipped;
    row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
    if (r.checked == 0) row.pass = false;
  }
  row.pass = row.pass && row.max_rel_error < tolerance;
  return row;
}

std::vector<double> random_probs(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  for (auto& v : p) v = rng.uniform(0.15, 0.85);
  return p;
}

std::vector<double> random_labels(Rng& rng, std::size_t n) {
  std::vector<double> y(n);
  for (auto& v : y) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  y[0] = 1.0;
  return y;
}

// Differences kept 0.05 away from the smooth-L1 transition at |x| = 1.
std::vector<double> random_diffs(Rng& rng, std::size_t n) {
  std::vector<double> d(n);
  for (auto& v : d) {
    do {
      v = rng.uniform(-3.0, 3.0);
    } while (std::abs(std::abs(v) - 1.0) < 0.05);
  }
  return d;
}

}  // namespace

std::vector<std::size_t> param_groups(const EncoderParams& params) {
  std::vector<std::size_t> out;
  std::size_t at = 0;
  for (const auto& [_, m] : params.entries()) {
    out.push_back(at);
    at += static_cast<std::size_t>(m.size());
  }
  return out;
}

Objective stage1_objective(std::vector<ScenarioInputs> batch, Matrix targets, const EncoderParams& layout,
                           const StageOneWeights& w, const ModelConfig& cfg, StageOneTerm term) {
  auto state = std::make_shared<Stage1State>();
  state->batch = std::move(batch);
  state->targets = std::move(targets);
  state->params = layout;
  state->cfg = cfg;
  switch (term) {
    case StageOneTerm::kTotal: state->weights = w; break;
    case StageOneTerm::kRestore: state->weights = {1.0, 0.0}; break;
    case StageOneTerm::kAlign: state->weights = {0.0, 1.0}; break;
  }
  Objective f;
  f.value = [state](std::span<const double> x) { return state->evaluate(x, nullptr); };
  f.gradient = [state](std::span<const double> x) {
    std::vector<double> g;
    state->evaluate(x, &g);
    return g;
  };
  f.regime = [state](std::span<const double> x) {
    if (!std::equal(x.begin(), x.end(), state->last_point.begin(), state->last_point.end()))
      state->evaluate(x, nullptr);
    return state->last_regime;
  };
  return f;
}

std::vector<SuiteRow> run_gradient_suite(const SuiteOptions& opt) {
  check_config(opt.model);
  std::vector<SuiteRow> rows;

  // Two scenarios from different clusters so both loss terms are active.
  const GeneratorConfig gen = default_generator_config(opt.seed);
  std::vector<ScenarioPrimitive> scenarios = {
      generate_scenario(gen.clusters[0], 0, opt.seed, "a"),
      generate_scenario(gen.clusters[1], 1, opt.seed ^ 1U, "b"),
  };
  std::vector<ScenarioInputs> batch;
  for (const auto& s : scenarios) batch.push_back(prepare_inputs(s, opt.model));
  Matrix targets = Matrix::Zero(2, 2);
  targets(0, 1) = targets(1, 0) = graph_dtw(scenarios[0], scenarios[1]);

  const std::pair<const char*, StageOneTerm> terms[] = {
      {"stage1_total", StageOneTerm::kTotal},
      {"stage1_restoration", StageOneTerm::kRestore},
      {"stage1_alignment", StageOneTerm::kAlign},
  };
  for (const auto& [name, term] : terms) {
    std::vector<GradCheckReport> reports;
    for (int p = 0; p < opt.points; ++p) {
      const EncoderParams point = init_params(opt.model, opt.seed * 7919U + static_cast<std::uint64_t>(p));
      const Objective f = stage1_objective(batch, targets, point, {}, opt.model, term);
      GradCheckOptions go{opt.step, opt.coordinates, opt.seed + static_cast<std::uint64_t>(p), param_groups(point)};
      reports.push_back(grad_check(f, point.flatten(), go));
    }
    rows.push_back(summarize(name, reports, opt.tolerance));
  }

  Rng rng(opt.seed ^ 0xF0CA1ULL);
  const FocalConfig focal;
  {
    std::vector<GradCheckReport> reports;
    for (int p = 0; p < opt.points; ++p) {
      const std::vector<double> labels = random_labels(rng, 64);
      Objective f;
      f.value = [labels, focal](std::span<const double> x) { return focal_loss(x, labels, focal).loss; };
      f.gradient = [labels, focal](std::span<const double> x) { return focal_loss_grad(x, labels, focal); };
      reports.push_back(grad_check(f, random_probs(rng, 64), {opt.step, opt.coordinates, opt.seed + p, {}}));
    }
    rows.push_back(summarize("focal", reports, opt.tolerance));
  }
  {
    std::vector<GradCheckReport> reports;
    for (int p = 0; p < opt.points; ++p) {
      const std::vector<double> gt = random_probs(rng, 48);
      std::vector<double> pred = random_diffs(rng, 48);
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += gt[i];
      Objective f;
      f.value = [gt](std::span<const double> x) { return smooth_l1(x, gt); };
      f.gradient = [gt](std::span<const double> x) { return smooth_l1_grad(x, gt); };
      reports.push_back(grad_check(f, pred, {opt.step, opt.coordinates, opt.seed + p, {}}));
    }
    rows.push_back(summarize("smooth_l1", reports, opt.tolerance));
  }
  {
    // Classification probabilities followed by box regressions in one vector.
    constexpr std::size_t kCls = 32, kReg = 32;
    const PerceptionWeights pw;
    std::vector<GradCheckReport> reports;
    for (int p = 0; p < opt.points; ++p) {
      const std::vector<double> labels = random_labels(rng, kCls);
      const std::vector<double> gt = random_probs(rng, kReg);
      std::vector<double> point = random_probs(rng, kCls);
      const std::vector<double> diffs = random_diffs(rng, kReg);
      for (std::size_t i = 0; i < kReg; ++i) point.push_back(gt[i] + diffs[i]);
      Objective f;
      f.value = [=](std::span<const double> x) {
        return perception_loss(focal_loss(x.first(kCls), labels, focal).loss, smooth_l1(x.subspan(kCls), gt), pw);
      };
      f.gradient = [=](std::span<const double> x) {
        std::vector<double> g = focal_loss_grad(x.first(kCls), labels, focal);
        for (double& v : g) v *= pw.lambda_c;
        for (double v : smooth_l1_grad(x.subspan(kCls), gt)) g.push_back(pw.lambda_e * v);
        return g;
      };
      reports.push_back(grad_check(f, point, {opt.step, opt.coordinates, opt.seed + p, {0, kCls}}));
    }
    rows.push_back(summarize("perception", reports, opt.tolerance));
  }
  {
    std::vector<GradCheckReport> reports;
    for (int p = 0; p < opt.points; ++p) {
      TrajectoryBatch base;
      auto points = [&](int n) {
        std::vector<Point> v(static_cast<std::size_t>(n));
        for (auto& q : v) q = {rng.uniform(-20.0, 20.0), rng.uniform(-20.0, 20.0)};
        return v;
      };
      base.path_gt = points(base.path_queries);
      base.speed_gt = points(base.speed_queries);
      std::vector<double> x;
      for (const auto& q : points(base.path_queries + base.speed_queries)) x.insert(x.end(), q.begin(), q.end());
      auto unpack = [base](std::span<const double> v) {
        TrajectoryBatch b = base;
        for (int i = 0; i < b.path_queries; ++i) b.path_pred.push_back({v[2 * i], v[2 * i + 1]});
        const std::size_t off = 2 * static_cast<std::size_t>(b.path_queries);
        for (int i = 0; i < b.speed_queries; ++i) b.speed_pred.push_back({v[off + 2 * i], v[off + 2 * i + 1]});
        return b;
      };
      Objective f;
      f.value = [unpack](std::span<const double> v) { return trajectory_loss(unpack(v)); };
      f.gradient = [unpack](std::span<const double> v) {
        const TrajectoryGrad g = trajectory_loss_grad(unpack(v));
        std::vector<double> out;
        for (const auto& q : g.path) out.insert(out.end(), q.begin(), q.end());
        for (const auto& q : g.speed) out.insert(out.end(), q.begin(), q.end());
        return out;
      };
      reports.push_back(grad_check(f, x, {opt.step, opt.coordinates, opt.seed + p, {}}));
    }
    rows.push_back(summarize("trajectory", reports, opt.tolerance));
  }
  return rows;
}

}  // namespace scenario_rag

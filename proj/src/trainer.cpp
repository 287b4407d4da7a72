#include "scenario_rag/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <string>
#include <unordered_map>

#include "scenario_rag/csv.hpp"
#include "scenario_rag/error.hpp"
#include "scenario_rag/random.hpp"

namespace scenario_rag {

namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr double kStatMomentum = 0.9;

struct Prepared {
  std::vector<ScenarioInputs> inputs;
  Matrix targets;
};

Prepared prepare(const LabeledDataset& ds, const DistanceMatrix& dm, const TrainConfig& cfg,
                 const ModelConfig& mcfg) {
  Prepared p;
  p.inputs.reserve(ds.scenarios.size());
  for (const auto& s : ds.scenarios) p.inputs.push_back(prepare_inputs(s, mcfg));
  p.targets = alignment_targets(ds.scenarios, dm, cfg.target_percentile);
  return p;
}

Matrix batch_targets(const Matrix& all, std::span<const std::size_t> members) {
  const auto b = static_cast<Eigen::Index>(members.size());
  Matrix t(b, b);
  for (Eigen::Index i = 0; i < b; ++i)
    for (Eigen::Index j = 0; j < b; ++j)
      t(i, j) = all(static_cast<Eigen::Index>(members[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(members[static_cast<std::size_t>(j)]));
  return t;
}

// Running latent mean and variance (not optimized) that standardize the
// decoder input. `variance` carries the running variance between calls.
void update_latent_stats(const ad::Tape& tape, const std::vector<ad::Var>& latents, bool first, Matrix& variance,
                         EncoderParams& params) {
  Matrix all(static_cast<Eigen::Index>(latents.size()), tape.value(latents.front()).cols());
  for (std::size_t k = 0; k < latents.size(); ++k) all.row(static_cast<Eigen::Index>(k)) = tape.value(latents[k]);
  const Matrix mean = all.colwise().mean();
  Matrix var = Matrix::Zero(1, all.cols());
  if (all.rows() > 1) var = (all.rowwise() - mean.row(0)).array().square().colwise().sum() / static_cast<double>(all.rows());
  Matrix& center = params.get("decoder.latent_center");
  if (first) {
    center = mean;
    variance = var;
  } else {
    center = kStatMomentum * center + (1.0 - kStatMomentum) * mean;
    if (all.rows() > 1) variance = kStatMomentum * variance + (1.0 - kStatMomentum) * var;
  }
  params.get("decoder.latent_scale").setConstant(1.0 / std::sqrt(variance.mean() + kLatentVarianceFloor));
}

}  // namespace

void check_config(const TrainConfig& cfg) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kValidation, "train config: " + why); };
  if (cfg.epochs < 0) fail("epochs must be >= 0");
  if (cfg.batch_size < 1) fail("batch_size must be >= 1");
  if (!(cfg.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(cfg.epsilon > 0.0)) fail("epsilon must be positive");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
    fail("moment coefficients must lie in [0, 1)");
  if (!(cfg.weights.lambda_r >= 0.0) || !(cfg.weights.lambda_a >= 0.0)) fail("loss weights must be >= 0");
  if (!(cfg.target_percentile > 0.0 && cfg.target_percentile <= 100.0)) fail("target_percentile must be in (0, 100]");
}

Matrix alignment_targets(const std::vector<ScenarioPrimitive>& scenarios, const DistanceMatrix& dm,
                         double percentile) {
  std::unordered_map<std::string, std::size_t> row;
  for (std::size_t i = 0; i < dm.ids.size(); ++i) row.emplace(dm.ids[i], i);
  std::vector<std::size_t> idx;
  idx.reserve(scenarios.size());
  for (const auto& s : scenarios) {
    const auto it = row.find(s.scenario_id);
    if (it == row.end()) throw Error(ErrorCode::kUnknownId, "distance matrix has no row for " + s.scenario_id);
    idx.push_back(it->second);
  }
  double norm = dm.size() >= 2 ? upper_percentile(dm, percentile) : 1.0;
  if (!(norm > 0.0)) norm = 1.0;
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix t(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      t(i, j) = dm.at(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]) / norm;
  return t;
}

TrainResult train_embedding(const LabeledDataset& ds, const DistanceMatrix& dm, const TrainConfig& cfg,
                            const ModelConfig& mcfg, const EpochCallback& on_epoch) {
  check_config(cfg);
  check_config(mcfg);
  if (ds.scenarios.empty()) throw Error(ErrorCode::kEmpty, "training set is empty");
  TrainResult result{init_params(mcfg, cfg.seed), {}};
  if (cfg.epochs == 0) return result;

  const Prepared data = prepare(ds, dm, cfg, mcfg);
  EncoderParams& params = result.params;
  std::vector<Matrix> m1, m2;
  for (const auto& [_, w] : params.entries()) {
    m1.push_back(Matrix::Zero(w.rows(), w.cols()));
    m2.push_back(Matrix::Zero(w.rows(), w.cols()));
  }

  Rng shuffle_rng = Rng::stream(cfg.seed, kShuffleStream);
  std::vector<std::size_t> order(ds.scenarios.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::int64_t step = 0;
  const std::size_t center_index = params.index_of("decoder.latent_center");
  const std::size_t scale_index = params.index_of("decoder.latent_scale");
  Matrix stats = Matrix::Ones(1, mcfg.latent_dim);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
      std::swap(order[i - 1], order[j]);
    }
    EpochLoss row{epoch, 0.0, 0.0, 0.0};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::span<const std::size_t> members(order.data() + start, std::min(batch, order.size() - start));
      std::vector<const ScenarioInputs*> inputs;
      for (auto k : members) inputs.push_back(&data.inputs[k]);

      ad::Tape tape;
      const ParamVars pv = register_params(tape, params, true);
      const BatchLoss loss = stage1_batch_loss(tape, pv, inputs, batch_targets(data.targets, members), cfg.weights, mcfg);
      const double total = tape.value(loss.total)(0, 0);
      if (!std::isfinite(total) || !std::isfinite(loss.restore) || !std::isfinite(loss.align))
        throw Error(ErrorCode::kNumericalDivergence, "non-finite loss in epoch " + std::to_string(epoch));
      row.restore += loss.restore;
      row.align += loss.align;
      row.total += total;
      ++batches;

      tape.backward(loss.total);
      ++step;
      update_latent_stats(tape, loss.latents, step == 1, stats, params);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      auto& entries = params.entries();
      for (std::size_t t = 0; t < entries.size(); ++t) {
        if (t == center_index || t == scale_index) continue;
        const Matrix g = tape.grad(pv.vars[t]);
        m1[t] = cfg.beta1 * m1[t] + (1.0 - cfg.beta1) * g;
        m2[t] = cfg.beta2 * m2[t] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        entries[t].second.array() -=
            cfg.learning_rate * (m1[t].array() / c1) / ((m2[t].array() / c2).sqrt() + cfg.epsilon);
      }
    }
    row.restore /= static_cast<double>(batches);
    row.align /= static_cast<double>(batches);
    row.total /= static_cast<double>(batches);
    result.history.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

StageOneEval evaluate_stage1(const LabeledDataset& ds, const DistanceMatrix& dm, const EncoderParams& params,
                             const TrainConfig& cfg, const ModelConfig& mcfg) {
  check_config(cfg);
  if (ds.scenarios.empty()) throw Error(ErrorCode::kEmpty, "evaluation set is empty");
  const Prepared data = prepare(ds, dm, cfg, mcfg);
  StageOneEval out;
  std::vector<std::vector<double>> latents;
  for (const auto& in : data.inputs) {
    ad::Tape tape;
    const ParamVars pv = register_params(tape, params, false);
    const ad::Var s = encode_on_tape(tape, pv, in, mcfg);
    const ad::Var probs = decode_on_tape(tape, pv, normalize_latent_on_tape(tape, pv, s), in, mcfg);
    out.restore += tape.value(soft_iou_loss_on_tape(tape, probs, in.edge_targets, in.slot_mask))(0, 0);
    const Matrix& sv = tape.value(s);
    latents.emplace_back(sv.data(), sv.data() + sv.size());
  }
  out.restore /= static_cast<double>(latents.size());
  out.mean_iou = 1.0 - out.restore;
  if (latents.size() >= 2) out.align = alignment_loss(latents, data.targets);
  return out;
}

void write_loss_csv(const std::vector<EpochLoss>& history, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "epoch,l_restore,l_align,l_total\n";
  for (const auto& r : history)
    out << r.epoch << ',' << format_double(r.restore) << ',' << format_double(r.align) << ','
        << format_double(r.total) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

std::vector<EpochLoss> read_loss_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,l_restore,l_align,l_total")
    throw Error(ErrorCode::kParse, path.string() + ": bad loss CSV header");
  std::vector<EpochLoss> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 4)
      throw Error(ErrorCode::kParse, path.string() + ": line " + std::to_string(line_no) + ": expected 4 fields");
    out.push_back({static_cast<int>(parse_double(cells[0])), parse_double(cells[1]), parse_double(cells[2]),
                   parse_double(cells[3])});
  }
  return out;
}

}  // namespace scenario_rag

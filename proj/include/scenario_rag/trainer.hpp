#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "scenario_rag/embedding.hpp"
#include "scenario_rag/graph_distance.hpp"
#include "scenario_rag/synth.hpp"

namespace scenario_rag {

struct TrainConfig {
  StageOneWeights weights;
  int epochs = 200;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // DTW targets are divided by this upper-triangle percentile of the matrix.
  double target_percentile = 95.0;
  std::uint64_t seed = 1;

  bool operator==(const TrainConfig&) const = default;
};

// Throws Error{kValidation} for non-positive rates/batch, negative epochs or
// weights, or moments outside [0, 1).
void check_config(const TrainConfig& cfg);

struct EpochLoss {
  int epoch = 0;
  double restore = 0.0;
  double align = 0.0;
  double total = 0.0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochLoss> history;
};

// Pairwise alignment targets for the dataset in its own order, scaled by the
// configured percentile. Throws Error{kUnknownId} if the matrix misses a scenario.
Matrix alignment_targets(const std::vector<ScenarioPrimitive>& scenarios, const DistanceMatrix& dm,
                         double percentile);

using EpochCallback = std::function<void(const EpochLoss&)>;

// Mini-batch Adam on the weighted restoration + alignment objective. Batches are
// reshuffled every epoch from the seed; the run is bit-deterministic. Each
// history row averages the batch losses of that epoch. Throws
// Error{kNumericalDivergence} naming the epoch if a loss turns non-finite.
TrainResult train_embedding(const LabeledDataset& ds, const DistanceMatrix& dm, const TrainConfig& cfg,
                            const ModelConfig& mcfg, const EpochCallback& on_epoch = {});

struct StageOneEval {
  double restore = 0.0;
  double align = 0.0;
  double mean_iou = 0.0;
};

// Losses of fixed parameters over the whole set: restoration averaged over
// scenarios, alignment over every pair.
StageOneEval evaluate_stage1(const LabeledDataset& ds, const DistanceMatrix& dm, const EncoderParams& params,
                             const TrainConfig& cfg, const ModelConfig& mcfg);

// CSV "epoch,l_restore,l_align,l_total".
void write_loss_csv(const std::vector<EpochLoss>& history, const std::filesystem::path& path);
std::vector<EpochLoss> read_loss_csv(const std::filesystem::path& path);

}  // namespace scenario_rag

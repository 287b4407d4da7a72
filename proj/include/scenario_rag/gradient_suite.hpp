#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenario_rag/embedding.hpp"
#include "scenario_rag/grad_check.hpp"

namespace scenario_rag {

enum class StageOneTerm { kTotal, kRestore, kAlign };

// The weighted stage-1 loss (or one of its terms) of a fixed batch as a
// function of the flattened encoder parameters, with ReLU regime tracking.
Objective stage1_objective(std::vector<ScenarioInputs> batch, Matrix targets, const EncoderParams& layout,
                           const StageOneWeights& w, const ModelConfig& cfg, StageOneTerm term);

// Start offsets of each tensor in EncoderParams::flatten() order.
std::vector<std::size_t> param_groups(const EncoderParams& params);

struct SuiteOptions {
  int points = 10;
  std::size_t coordinates = 200;
  double step = 1e-3;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  ModelConfig model;
};

struct SuiteRow {
  std::string objective;
  int points = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Gradient checks of the stage-1 total, restoration and alignment losses on a
// two-scenario batch, and of the focal, smooth-L1, perception and trajectory
// losses, each at `points` random points.
std::vector<SuiteRow> run_gradient_suite(const SuiteOptions& opt);

}  // namespace scenario_rag

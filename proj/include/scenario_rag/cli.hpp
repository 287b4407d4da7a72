#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scenario_rag/embedding.hpp"
#include "scenario_rag/graph_distance.hpp"
#include "scenario_rag/synth.hpp"
#include "scenario_rag/trainer.hpp"

namespace scenario_rag::cli {

// Artifact locations; relative paths resolve against the output directory.
struct Paths {
  std::string dataset = "dataset.jsonl";
  std::string labels = "labels.csv";
  std::string distances = "distances.csv";
  std::string checkpoint = "checkpoint.saem";
  std::string losses = "losses.csv";
  std::string vectors = "vectors.csv";
  std::string index = "index.vidx";
};

struct EvalConfig {
  std::size_t k = 10;
  int queries_per_cluster = 30;
  // Held-out queries come from the same clusters under this seed; unset means
  // derived from the global seed.
  std::optional<std::uint64_t> query_seed;
};

struct BenchConfig {
  std::vector<std::size_t> sizes = {1000, 10000, 100000};
  std::size_t queries = 200;
  std::size_t dim = 64;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string out = "out";
  Paths paths;
  GeneratorConfig generator = default_generator_config();
  FrameDistanceWeights distance;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  BenchConfig bench;
};

// Applies the global seed to every seeded component.
void apply_seed(PipelineConfig& cfg, std::uint64_t seed);
std::uint64_t query_seed(const PipelineConfig& cfg);

nlohmann::ordered_json to_json(const PipelineConfig& cfg);
// Overlays the keys present in `j` onto `base`. Unknown keys and wrongly typed
// values throw Error{kValidation}.
PipelineConfig from_json(const nlohmann::json& j, PipelineConfig base = {});

// Entry point of the command-line tool. Returns 0 on success, 1 on usage or
// validation errors and 2 on I/O errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace scenario_rag::cli

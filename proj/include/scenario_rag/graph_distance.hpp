#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenario_rag/scenario.hpp"

namespace scenario_rag {

struct FrameDistanceWeights {
  double w_node = 1.0;
  double w_edge = 1.0;
  double w_attr = 0.5;
};

// Throws Error{kValidation} when a weight is negative or all are zero.
void check_weights(const FrameDistanceWeights& w);

inline constexpr double kPositionScale = 50.0;  // m
inline constexpr double kSpeedScale = 20.0;     // m/s

// Precomputed per-frame view used by the distance kernels. Nodes are
// identified by (kind, rank within kind in canonical order).
struct FrameSummary {
  struct Attr {
    double x = 0.0;
    double y = 0.0;
    double speed = 0.0;
  };
  std::array<int, kEntityKindCount> kind_counts{};
  int node_count = 0;
  std::vector<std::uint64_t> edge_keys;  // sorted, unique
  std::array<std::vector<Attr>, kEntityKindCount> attrs;
};

// Throws Error{kNonCanonicalInput} if g is not canonical.
FrameSummary summarize(const SemanticGraph& g);

double frame_distance(const FrameSummary& a, const FrameSummary& b, const FrameDistanceWeights& w);

// w_node * L1(kind histograms) / max node count
// + w_edge * (1 - Jaccard of typed edges), 0 when both edge sets are empty
// + w_attr * mean over (kind, rank) pairs of min(1, |(dx, dy)/50, dv/20|),
//   unmatched nodes contributing 1.
double frame_distance(const SemanticGraph& a, const SemanticGraph& b, const FrameDistanceWeights& w = {});

// Minimum summed frame cost over monotone warping paths (steps right, down,
// diagonal), divided by the length of the chosen path. Among paths of equal
// cost the shortest is chosen. Throws Error{kEmptySequence|kNonCanonicalInput}.
double graph_dtw(const ScenarioPrimitive& a, const ScenarioPrimitive& b, const FrameDistanceWeights& w = {});
double graph_dtw(const std::vector<FrameSummary>& a, const std::vector<FrameSummary>& b,
                 const FrameDistanceWeights& w);

// Enumerates every monotone warping path; requires T1 * T2 <= 36
// (Error{kTooLarge} otherwise). Same normalization and tie rule as graph_dtw.
double dtw_brute_force(const ScenarioPrimitive& a, const ScenarioPrimitive& b,
                       const FrameDistanceWeights& w = {});

struct DistanceMatrix {
  std::vector<std::string> ids;
  std::vector<double> values;  // row-major n x n

  std::size_t size() const { return ids.size(); }
  double at(std::size_t i, std::size_t j) const { return values[i * ids.size() + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * ids.size() + j]; }
};

// Pairs are independent; any thread count yields bit-identical results.
DistanceMatrix distance_matrix(const std::vector<ScenarioPrimitive>& dataset,
                               const FrameDistanceWeights& w = {}, unsigned threads = 1);

// Nearest-rank percentile of the strictly upper-triangular entries.
double upper_percentile(const DistanceMatrix& m, double percentile);

// Header "scenario_id,<id_0>,...,<id_n-1>", then one labelled row per scenario.
void write_distance_csv(const DistanceMatrix& m, const std::filesystem::path& path);
DistanceMatrix read_distance_csv(const std::filesystem::path& path);

}  // namespace scenario_rag

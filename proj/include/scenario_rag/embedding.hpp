#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "scenario_rag/autodiff.hpp"
#include "scenario_rag/scenario.hpp"

namespace scenario_rag {

using Matrix = Eigen::MatrixXd;

// Tensorized node features: kind one-hot (5) followed by state scalars (11).
inline constexpr int kNodeFeatureDim = 16;
// Frame-position features fed to the edge decoder next to the latent.
inline constexpr int kDecoderTimeDim = 8;
inline constexpr double kMinInteractionDistance = 0.5;  // m, floor for d_ij
// Added to the latent variance before the decoder input is standardized.
inline constexpr double kLatentVarianceFloor = 1e-4;

struct ModelConfig {
  int node_feature_dim = kNodeFeatureDim;  // F
  int hidden_dim = 64;                     // H
  int latent_dim = 64;                     // D
  int rgcn_layers = 2;                     // L
  int heads = 8;                           // h, d_k = H / h
  int attention_layers = 1;
  int max_nodes = 16;   // N_max
  int max_frames = 32;  // T_max
  int relation_count = static_cast<int>(kRelationCount);
  int decoder_hidden = 64;
  // false: d_ij = 1; true: d_ij = max(0.5 m, |p_i - p_j|).
  bool distance_weighting = false;

  bool operator==(const ModelConfig&) const = default;
};

// Throws Error{kValidation} unless H % h == 0, all dims >= 1, F == 16 and
// |R| == 4.
void check_config(const ModelConfig& cfg);

// Named parameter tensors in a fixed order:
//   input.kind_embedding              5 x F
//   rgcn.<l>.relation.<r>, rgcn.<l>.self   in x H   (in = F for l = 0, else H)
//   attention.<a>.{query,key,value,output} H x H
//   projection                        H x D
//   decoder.latent_center, decoder.latent_scale  1 x D running statistics
//                                     (not optimized) that standardize S
//                                     for the decoder
//   decoder.hidden.{weight,bias}      (D + 8) x Hd, 1 x Hd
//   decoder.output.{weight,bias}      Hd x |R|*N_max^2, 1 x |R|*N_max^2
class EncoderParams {
 public:
  using Entry = std::pair<std::string, Matrix>;

  void add(std::string name, Matrix value);
  const Matrix& get(const std::string& name) const;
  Matrix& get(const std::string& name);
  std::size_t index_of(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  bool operator==(const EncoderParams&) const;

 private:
  std::vector<Entry> entries_;
};

// Zero tensors with the configured shapes.
EncoderParams zero_params(const ModelConfig& cfg);
// Weights uniform in +-1/sqrt(fan_in) from the seeded stream, biases zero.
EncoderParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct GraphTensors {
  Matrix features;                     // N_max x F, zero rows past node_count
  std::vector<Matrix> adjacency;       // |R| of N_max x N_max; [r](i, j) = 1 iff edge j -> i
  Matrix strength;                     // N_max x N_max, d_ij
  std::vector<bool> mask;              // N_max, true for real nodes
  int node_count = 0;
};

// Throws Error{kTooManyNodes}; canonicalizes g first.
GraphTensors tensorize(const SemanticGraph& g, const ModelConfig& cfg);

// Relational graph convolution over one frame. Returns N_max x H; rows of
// padded nodes stay zero.
Matrix rgcn_forward(const GraphTensors& tensors, const EncoderParams& params, const ModelConfig& cfg);

// Multi-head attention over frame embeddings (T x H) plus sinusoidal
// positions, then mean over time and projection to D. Throws
// Error{kEmptySequence} for T = 0 and Error{kShapeMismatch} for T > T_max.
std::vector<double> temporal_encode(const Matrix& frame_embeddings, const EncoderParams& params,
                                    const ModelConfig& cfg);

// Full encoder: canonicalize, tensorize, RGCN per frame, masked mean, attention.
std::vector<double> encode(const ScenarioPrimitive& s, const EncoderParams& params, const ModelConfig& cfg);

// Decoder time features for frame j of T.
Eigen::RowVectorXd decoder_time_features(int frame_index, int frame_count, const ModelConfig& cfg);

// Edge probabilities for one frame, layout [r][dst][src] flattened; the
// diagonal is forced to 0.
std::vector<double> decode_edges(std::span<const double> latent, int frame_index, int frame_count,
                                 const EncoderParams& params, const ModelConfig& cfg);

Matrix sinusoidal_positions(int frames, int width);

// --- Stage-1 objectives ----------------------------------------------------

// Soft IoU sum(p g) / sum(p + g - p g); 1 when the denominator is 0.
double soft_iou(std::span<const double> pred, std::span<const double> gt);

// (1/B) sum_k (1 - (1/N_k) sum_j IoU_kj). Frames are listed scenario after
// scenario; frames_per_scenario gives each N_k.
double restoration_loss(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& gt,
                        std::span<const std::size_t> frames_per_scenario);

// 2 / (B (B - 1)) sum_{k<l} (|S_k - S_l| - d_kl)^2. Throws Error{kBatchTooSmall}.
double alignment_loss(const std::vector<std::vector<double>>& latents, const Matrix& targets);

struct StageOneWeights {
  double lambda_r = 1.0;
  double lambda_a = 1.0;
};

double total_stage1_loss(double restore, double align, const StageOneWeights& w);

// --- Differentiable pipeline ------------------------------------------------

// Per-scenario tensors prepared once and reused across epochs.
struct ScenarioInputs {
  Matrix features;                       // sum(n_t) x F
  std::vector<ad::Message> messages;     // stacked-row message list
  std::vector<std::pair<Eigen::Index, Eigen::Index>> frames;  // (first row, node count)
  Matrix positions;                      // T x H sinusoidal
  Matrix time_features;                  // T x 8
  Matrix edge_targets;                   // T x |R|*N_max^2
  Matrix slot_mask;                      // T x |R|*N_max^2, off-diagonal slots among real nodes
};

ScenarioInputs prepare_inputs(const ScenarioPrimitive& s, const ModelConfig& cfg);

// Parameters registered on a tape, in EncoderParams order.
struct ParamVars {
  std::vector<ad::Var> vars;
  const EncoderParams* params = nullptr;
  ad::Var operator[](const std::string& name) const { return vars[params->index_of(name)]; }
};

ParamVars register_params(ad::Tape& tape, const EncoderParams& params, bool trainable);

ad::Var encode_on_tape(ad::Tape& tape, const ParamVars& p, const ScenarioInputs& in, const ModelConfig& cfg);
// (S - latent_center) * latent_scale with the stored statistics.
ad::Var normalize_latent_on_tape(ad::Tape& tape, const ParamVars& p, ad::Var latent);
// T x |R|*N_max^2 probabilities (diagonal not yet masked) from a standardized latent.
ad::Var decode_on_tape(ad::Tape& tape, const ParamVars& p, ad::Var decoder_input, const ScenarioInputs& in,
                       const ModelConfig& cfg);
// 1 - mean_t soft IoU over the slot mask, as a 1x1 node.
ad::Var soft_iou_loss_on_tape(ad::Tape& tape, ad::Var probs, const Matrix& targets, const Matrix& slot_mask);
// Alignment loss of B x D latents against B x B targets, as a 1x1 node.
ad::Var alignment_loss_on_tape(ad::Tape& tape, ad::Var latents, const Matrix& targets);

struct BatchLoss {
  ad::Var total;
  std::vector<ad::Var> latents;
  double restore = 0.0;
  double align = 0.0;
  double mean_iou = 0.0;
};

// Weighted restoration + alignment over a batch. Alignment is skipped for a single-scenario
// batch; a zero weight removes its term from the graph. In training mode the
// decoder input is standardized with the batch's own statistics (batches of
// two or more), otherwise with the stored running statistics.
BatchLoss stage1_batch_loss(ad::Tape& tape, const ParamVars& p, std::span<const ScenarioInputs* const> batch,
                            const Matrix& targets, const StageOneWeights& w, const ModelConfig& cfg,
                            bool training = true);

}  // namespace scenario_rag

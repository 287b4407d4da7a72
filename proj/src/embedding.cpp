#include "scenario_rag/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "scenario_rag/error.hpp"
#include "scenario_rag/random.hpp"

namespace scenario_rag {

namespace {

constexpr double kPositionNorm = 50.0;
constexpr double kSpeedNorm = 20.0;
constexpr double kEdgePrior = 0.05;

std::string rgcn_relation_name(int layer, int relation) {
  return "rgcn." + std::to_string(layer) + ".relation." + std::to_string(relation);
}
std::string rgcn_self_name(int layer) { return "rgcn." + std::to_string(layer) + ".self"; }
std::string attention_name(int layer, const char* part) {
  return "attention." + std::to_string(layer) + "." + part;
}

Eigen::Index slot_count(const ModelConfig& cfg) {
  return static_cast<Eigen::Index>(cfg.relation_count) * cfg.max_nodes * cfg.max_nodes;
}

Eigen::Index slot_index(const ModelConfig& cfg, int relation, int dst, int src) {
  return (static_cast<Eigen::Index>(relation) * cfg.max_nodes + dst) * cfg.max_nodes + src;
}

// Heading of the centerline segment closest to the ego origin.
double lane_heading(const LaneState& lane) {
  double best = std::numeric_limits<double>::infinity();
  double heading = 0.0;
  for (std::size_t i = 0; i + 1 < lane.centerline.size(); ++i) {
    const std::vector<Point2> segment = {lane.centerline[i], lane.centerline[i + 1]};
    const double d = distance_to_polyline(segment, {});
    if (d < best) {
      best = d;
      heading = std::atan2(segment[1].y - segment[0].y, segment[1].x - segment[0].x);
    }
  }
  return heading;
}

Eigen::RowVectorXd node_features(const EntityNode& n) {
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(kNodeFeatureDim);
  f(static_cast<Eigen::Index>(rank(n.kind))) = 1.0;
  const Point2 p = node_position(n);
  f(5) = p.x / kPositionNorm;
  f(6) = p.y / kPositionNorm;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EgoState>) {
          f(7) = s.speed / kSpeedNorm;
          f(8) = std::sin(s.heading);
          f(9) = std::cos(s.heading);
        } else if constexpr (std::is_same_v<T, VehicleState>) {
          f(7) = s.speed / kSpeedNorm;
          f(8) = std::sin(s.heading);
          f(9) = std::cos(s.heading);
          f(10) = s.length / 5.0;
          f(11) = s.width / 2.5;
        } else if constexpr (std::is_same_v<T, SignState>) {
          f(12 + static_cast<Eigen::Index>(s.sign_class)) = 1.0;
          f(15) = s.limit / 100.0;
        } else if constexpr (std::is_same_v<T, SignalState>) {
          f(12 + static_cast<Eigen::Index>(s.phase)) = 1.0;
        } else {
          const double h = lane_heading(s);
          f(8) = std::sin(h);
          f(9) = std::cos(h);
          f(10) = s.width / 3.5;
          f(15) = static_cast<double>(s.lane_id) / 4.0;
        }
      },
      n.state);
  return f;
}

std::vector<ad::Message> messages_from(const GraphTensors& t, Eigen::Index row_offset) {
  std::vector<ad::Message> out;
  const auto n = static_cast<Eigen::Index>(t.node_count);
  for (std::size_t r = 0; r < t.adjacency.size(); ++r) {
    const Matrix& a = t.adjacency[r];
    for (Eigen::Index i = 0; i < n; ++i) {
      double in_degree = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) in_degree += a(i, j);
      if (in_degree == 0.0) continue;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (a(i, j) == 0.0) continue;
        out.push_back({row_offset + i, row_offset + j, static_cast<Eigen::Index>(r),
                       1.0 / (in_degree * t.strength(i, j))});
      }
    }
  }
  return out;
}

ad::Var rgcn_on_tape(ad::Tape& tape, const ParamVars& p, const Matrix& features,
                     std::span<const ad::Message> messages, const ModelConfig& cfg) {
  using namespace ad;
  Var x = tape.constant(features);
  Var onehot = tape.constant(features.leftCols(static_cast<Eigen::Index>(kEntityKindCount)));
  x = add(tape, x, matmul(tape, onehot, p["input.kind_embedding"]));
  for (int l = 0; l < cfg.rgcn_layers; ++l) {
    std::vector<Var> relation_weights;
    for (int r = 0; r < cfg.relation_count; ++r) relation_weights.push_back(p[rgcn_relation_name(l, r)]);
    Var projected = matmul(tape, x, concat_cols(tape, relation_weights));
    Var messages_in = relational_aggregate(tape, projected, messages, cfg.hidden_dim);
    Var self = matmul(tape, x, p[rgcn_self_name(l)]);
    x = relu(tape, add(tape, messages_in, self));
  }
  return x;
}

ad::Var temporal_on_tape(ad::Tape& tape, const ParamVars& p, ad::Var frames, const Matrix& positions,
                         const ModelConfig& cfg) {
  using namespace ad;
  Var z = add(tape, frames, tape.constant(positions));
  const int dk = cfg.hidden_dim / cfg.heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int a = 0; a < cfg.attention_layers; ++a) {
    Var q = matmul(tape, z, p[attention_name(a, "query")]);
    Var k = matmul(tape, z, p[attention_name(a, "key")]);
    Var v = matmul(tape, z, p[attention_name(a, "value")]);
    std::vector<Var> heads;
    for (int m = 0; m < cfg.heads; ++m) {
      Var qm = slice_cols(tape, q, m * dk, dk);
      Var km = slice_cols(tape, k, m * dk, dk);
      Var vm = slice_cols(tape, v, m * dk, dk);
      Var scores = scale(tape, matmul(tape, qm, transpose(tape, km)), inv_sqrt_dk);
      heads.push_back(matmul(tape, softmax_rows(tape, scores), vm));
    }
    z = matmul(tape, concat_cols(tape, heads), p[attention_name(a, "output")]);
  }
  return matmul(tape, mean_rows(tape, z), p["projection"]);
}

std::vector<double> row_to_vector(const Matrix& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

}  // namespace

void check_config(const ModelConfig& cfg) {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::kValidation, "model config: " + why); };
  if (cfg.node_feature_dim != kNodeFeatureDim) fail("node_feature_dim must be 16");
  if (cfg.relation_count != static_cast<int>(kRelationCount)) fail("relation_count must be 4");
  if (cfg.hidden_dim < 1 || cfg.latent_dim < 1 || cfg.rgcn_layers < 1 || cfg.heads < 1 ||
      cfg.attention_layers < 1 || cfg.max_nodes < 1 || cfg.max_frames < 1 || cfg.decoder_hidden < 1)
    fail("all dimensions must be >= 1");
  if (cfg.hidden_dim % cfg.heads != 0) fail("hidden_dim must be divisible by heads");
}

void EncoderParams::add(std::string name, Matrix value) { entries_.emplace_back(std::move(name), std::move(value)); }

std::size_t EncoderParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].first == name) return i;
  throw Error(ErrorCode::kShapeMismatch, "no parameter named " + name);
}

const Matrix& EncoderParams::get(const std::string& name) const { return entries_[index_of(name)].second; }
Matrix& EncoderParams::get(const std::string& name) { return entries_[index_of(name)].second; }

std::size_t EncoderParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : entries_) n += static_cast<std::size_t>(m.size());
  return n;
}

std::vector<double> EncoderParams::flatten() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& [_, m] : entries_) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

void EncoderParams::assign(std::span<const double> flat) {
  if (flat.size() != scalar_count()) throw Error(ErrorCode::kShapeMismatch, "flat parameter size differs");
  std::size_t at = 0;
  for (auto& [_, m] : entries_) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = flat[at++];
  }
}

bool EncoderParams::operator==(const EncoderParams& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, ma] = entries_[i];
    const auto& [nb, mb] = other.entries_[i];
    if (na != nb || ma.rows() != mb.rows() || ma.cols() != mb.cols() || ma != mb) return false;
  }
  return true;
}

EncoderParams zero_params(const ModelConfig& cfg) {
  check_config(cfg);
  EncoderParams p;
  const auto F = cfg.node_feature_dim, H = cfg.hidden_dim, D = cfg.latent_dim, Hd = cfg.decoder_hidden;
  p.add("input.kind_embedding", Matrix::Zero(static_cast<Eigen::Index>(kEntityKindCount), F));
  for (int l = 0; l < cfg.rgcn_layers; ++l) {
    const int in = l == 0 ? F : H;
    for (int r = 0; r < cfg.relation_count; ++r) p.add(rgcn_relation_name(l, r), Matrix::Zero(in, H));
    p.add(rgcn_self_name(l), Matrix::Zero(in, H));
  }
  for (int a = 0; a < cfg.attention_layers; ++a) {
    for (const char* part : {"query", "key", "value", "output"}) p.add(attention_name(a, part), Matrix::Zero(H, H));
  }
  p.add("projection", Matrix::Zero(H, D));
  p.add("decoder.latent_center", Matrix::Zero(1, D));
  p.add("decoder.latent_scale", Matrix::Zero(1, D));
  p.add("decoder.hidden.weight", Matrix::Zero(D + kDecoderTimeDim, Hd));
  p.add("decoder.hidden.bias", Matrix::Zero(1, Hd));
  p.add("decoder.output.weight", Matrix::Zero(Hd, slot_count(cfg)));
  p.add("decoder.output.bias", Matrix::Zero(1, slot_count(cfg)));
  return p;
}

EncoderParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  EncoderParams p = zero_params(cfg);
  Rng rng(seed);
  for (auto& [name, m] : p.entries()) {
    if (name.ends_with(".bias") || name.starts_with("decoder.latent_")) continue;
    const double limit = 1.0 / std::sqrt(static_cast<double>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-limit, limit);
  }
  // Edges are sparse; starting every slot at the prior rate keeps the decoder
  // from spending its first updates pushing all outputs down.
  p.get("decoder.latent_scale").setOnes();
  p.get("decoder.output.bias").setConstant(std::log(kEdgePrior / (1.0 - kEdgePrior)));
  return p;
}

GraphTensors tensorize(const SemanticGraph& graph, const ModelConfig& cfg) {
  const SemanticGraph g = canonicalize(graph);
  const int n = static_cast<int>(g.nodes.size());
  if (n > cfg.max_nodes)
    throw Error(ErrorCode::kTooManyNodes,
                std::to_string(n) + " nodes exceed max_nodes " + std::to_string(cfg.max_nodes));
  GraphTensors t;
  const Eigen::Index N = cfg.max_nodes;
  t.node_count = n;
  t.features = Matrix::Zero(N, kNodeFeatureDim);
  t.adjacency.assign(static_cast<std::size_t>(cfg.relation_count), Matrix::Zero(N, N));
  t.strength = Matrix::Ones(N, N);
  t.mask.assign(static_cast<std::size_t>(N), false);
  std::unordered_map<EntityId, Eigen::Index> index;
  std::vector<Point2> positions;
  for (int i = 0; i < n; ++i) {
    const auto& node = g.nodes[static_cast<std::size_t>(i)];
    index[node.entity_id] = i;
    t.features.row(i) = node_features(node);
    t.mask[static_cast<std::size_t>(i)] = true;
    positions.push_back(node_position(node));
  }
  if (cfg.distance_weighting) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const auto a = positions[static_cast<std::size_t>(i)];
        const auto b = positions[static_cast<std::size_t>(j)];
        t.strength(i, j) = std::max(kMinInteractionDistance, std::hypot(a.x - b.x, a.y - b.y));
      }
  }
  for (const auto& e : g.edges) {
    t.adjacency[rank(e.kind)](index.at(e.dst), index.at(e.src)) = 1.0;
  }
  return t;
}

ParamVars register_params(ad::Tape& tape, const EncoderParams& params, bool trainable) {
  ParamVars pv;
  pv.params = &params;
  pv.vars.reserve(params.size());
  for (const auto& [_, m] : params.entries()) pv.vars.push_back(trainable ? tape.variable(m) : tape.constant(m));
  return pv;
}

Matrix rgcn_forward(const GraphTensors& tensors, const EncoderParams& params, const ModelConfig& cfg) {
  check_config(cfg);
  const Eigen::Index n = tensors.node_count;
  Matrix out = Matrix::Zero(cfg.max_nodes, cfg.hidden_dim);
  if (n == 0) return out;
  if (tensors.features.cols() != cfg.node_feature_dim || tensors.features.rows() < n)
    throw Error(ErrorCode::kShapeMismatch, "feature matrix does not match the model config");
  ad::Tape tape;
  const ParamVars p = register_params(tape, params, false);
  const auto messages = messages_from(tensors, 0);
  ad::Var x = rgcn_on_tape(tape, p, tensors.features.topRows(n), messages, cfg);
  out.topRows(n) = tape.value(x);
  return out;
}

Matrix sinusoidal_positions(int frames, int width) {
  Matrix pe(frames, width);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      pe(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return pe;
}

std::vector<double> temporal_encode(const Matrix& frame_embeddings, const EncoderParams& params,
                                    const ModelConfig& cfg) {
  check_config(cfg);
  const auto frames = static_cast<int>(frame_embeddings.rows());
  if (frames == 0) throw Error(ErrorCode::kEmptySequence, "temporal_encode needs at least one frame");
  if (frames > cfg.max_frames) throw Error(ErrorCode::kShapeMismatch, "more frames than max_frames");
  if (frame_embeddings.cols() != cfg.hidden_dim)
    throw Error(ErrorCode::kShapeMismatch, "frame embeddings must have hidden_dim columns");
  ad::Tape tape;
  const ParamVars p = register_params(tape, params, false);
  ad::Var s = temporal_on_tape(tape, p, tape.constant(frame_embeddings),
                               sinusoidal_positions(frames, cfg.hidden_dim), cfg);
  return row_to_vector(tape.value(s));
}

Eigen::RowVectorXd decoder_time_features(int frame_index, int frame_count, const ModelConfig& cfg) {
  Eigen::RowVectorXd f(kDecoderTimeDim);
  const double progress = frame_count > 1 ? static_cast<double>(frame_index) / (frame_count - 1) : 0.0;
  f(0) = progress;
  f(1) = static_cast<double>(frame_count) / cfg.max_frames;
  for (int k = 0; k < 3; ++k) {
    const double w = M_PI * static_cast<double>(1 << k);
    f(2 + 2 * k) = std::sin(w * progress);
    f(3 + 2 * k) = std::cos(w * progress);
  }
  return f;
}

ScenarioInputs prepare_inputs(const ScenarioPrimitive& s, const ModelConfig& cfg) {
  check_config(cfg);
  const int frames = static_cast<int>(s.frames.size());
  if (frames == 0) throw Error(ErrorCode::kEmptySequence, s.scenario_id + " has no frames");
  if (frames > cfg.max_frames)
    throw Error(ErrorCode::kShapeMismatch, s.scenario_id + " has more frames than max_frames");
  ScenarioInputs in;
  std::vector<GraphTensors> tensors;
  Eigen::Index rows = 0;
  for (const auto& g : s.frames) {
    tensors.push_back(tensorize(g, cfg));
    rows += tensors.back().node_count;
  }
  in.features = Matrix::Zero(rows, kNodeFeatureDim);
  in.edge_targets = Matrix::Zero(frames, slot_count(cfg));
  in.slot_mask = Matrix::Zero(frames, slot_count(cfg));
  in.time_features = Matrix(frames, kDecoderTimeDim);
  Eigen::Index at = 0;
  for (int t = 0; t < frames; ++t) {
    const auto& gt = tensors[static_cast<std::size_t>(t)];
    const int n = gt.node_count;
    in.features.middleRows(at, n) = gt.features.topRows(n);
    auto msgs = messages_from(gt, at);
    in.messages.insert(in.messages.end(), msgs.begin(), msgs.end());
    in.frames.emplace_back(at, n);
    at += n;
    for (int r = 0; r < cfg.relation_count; ++r)
      for (int dst = 0; dst < n; ++dst)
        for (int src = 0; src < n; ++src) {
          if (dst == src) continue;
          const auto slot = slot_index(cfg, r, dst, src);
          in.slot_mask(t, slot) = 1.0;
          in.edge_targets(t, slot) = gt.adjacency[static_cast<std::size_t>(r)](dst, src);
        }
    in.time_features.row(t) = decoder_time_features(t, frames, cfg);
  }
  in.positions = sinusoidal_positions(frames, cfg.hidden_dim);
  return in;
}

ad::Var encode_on_tape(ad::Tape& tape, const ParamVars& p, const ScenarioInputs& in, const ModelConfig& cfg) {
  ad::Var nodes = rgcn_on_tape(tape, p, in.features, in.messages, cfg);
  ad::Var frames = ad::segment_mean_rows(tape, nodes, in.frames);
  return temporal_on_tape(tape, p, frames, in.positions, cfg);
}

ad::Var normalize_latent_on_tape(ad::Tape& tape, const ParamVars& p, ad::Var latent) {
  using namespace ad;
  return mul_row(tape, add(tape, latent, scale(tape, p["decoder.latent_center"], -1.0)), p["decoder.latent_scale"]);
}

ad::Var decode_on_tape(ad::Tape& tape, const ParamVars& p, ad::Var decoder_input, const ScenarioInputs& in,
                       const ModelConfig& cfg) {
  (void)cfg;
  using namespace ad;
  const Eigen::Index frames = in.time_features.rows();
  const std::array<Var, 2> parts = {repeat_rows(tape, decoder_input, frames), tape.constant(in.time_features)};
  Var u = concat_cols(tape, parts);
  Var hidden = relu(tape, add_row(tape, matmul(tape, u, p["decoder.hidden.weight"]), p["decoder.hidden.bias"]));
  Var logits = add_row(tape, matmul(tape, hidden, p["decoder.output.weight"]), p["decoder.output.bias"]);
  return sigmoid(tape, logits);
}

std::vector<double> encode(const ScenarioPrimitive& s, const EncoderParams& params, const ModelConfig& cfg) {
  const ScenarioInputs in = prepare_inputs(s, cfg);
  ad::Tape tape;
  const ParamVars p = register_params(tape, params, false);
  return row_to_vector(tape.value(encode_on_tape(tape, p, in, cfg)));
}

std::vector<double> decode_edges(std::span<const double> latent, int frame_index, int frame_count,
                                 const EncoderParams& params, const ModelConfig& cfg) {
  check_config(cfg);
  if (static_cast<int>(latent.size()) != cfg.latent_dim)
    throw Error(ErrorCode::kShapeMismatch, "latent size differs from latent_dim");
  Eigen::RowVectorXd u(cfg.latent_dim + kDecoderTimeDim);
  const Matrix& center = params.get("decoder.latent_center");
  const Matrix& inv_std = params.get("decoder.latent_scale");
  for (int i = 0; i < cfg.latent_dim; ++i)
    u(i) = (latent[static_cast<std::size_t>(i)] - center(0, i)) * inv_std(0, i);
  u.tail(kDecoderTimeDim) = decoder_time_features(frame_index, frame_count, cfg);
  Eigen::RowVectorXd hidden =
      ((u * params.get("decoder.hidden.weight")) + params.get("decoder.hidden.bias")).cwiseMax(0.0);
  Eigen::RowVectorXd logits = hidden * params.get("decoder.output.weight") + params.get("decoder.output.bias");
  std::vector<double> probs(static_cast<std::size_t>(logits.size()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double x = logits(i);
    probs[static_cast<std::size_t>(i)] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  for (int r = 0; r < cfg.relation_count; ++r)
    for (int i = 0; i < cfg.max_nodes; ++i) probs[static_cast<std::size_t>(slot_index(cfg, r, i, i))] = 0.0;
  return probs;
}

double soft_iou(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "soft IoU inputs differ in length");
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * gt[i];
    uni += pred[i] + gt[i] - pred[i] * gt[i];
  }
  return uni > 0.0 ? inter / uni : 1.0;
}

double restoration_loss(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& gt,
                        std::span<const std::size_t> frames_per_scenario) {
  if (pred.size() != gt.size()) throw Error(ErrorCode::kShapeMismatch, "pred and gt frame counts differ");
  std::size_t total = 0;
  for (auto n : frames_per_scenario) {
    if (n == 0) throw Error(ErrorCode::kShapeMismatch, "scenario with zero frames");
    total += n;
  }
  if (total != pred.size()) throw Error(ErrorCode::kShapeMismatch, "frame counts do not cover the frames");
  if (frames_per_scenario.empty()) throw Error(ErrorCode::kShapeMismatch, "empty batch");
  double loss = 0.0;
  std::size_t at = 0;
  for (auto n : frames_per_scenario) {
    double iou = 0.0;
    for (std::size_t j = 0; j < n; ++j, ++at) iou += soft_iou(pred[at], gt[at]);
    loss += 1.0 - iou / static_cast<double>(n);
  }
  return loss / static_cast<double>(frames_per_scenario.size());
}

double alignment_loss(const std::vector<std::vector<double>>& latents, const Matrix& targets) {
  const std::size_t b = latents.size();
  if (b < 2) throw Error(ErrorCode::kBatchTooSmall, "alignment needs at least two scenarios");
  if (targets.rows() != static_cast<Eigen::Index>(b) || targets.cols() != static_cast<Eigen::Index>(b))
    throw Error(ErrorCode::kShapeMismatch, "target matrix must be B x B");
  double total = 0.0;
  for (std::size_t k = 0; k < b; ++k) {
    for (std::size_t l = k + 1; l < b; ++l) {
      if (latents[k].size() != latents[l].size()) throw Error(ErrorCode::kShapeMismatch, "latent sizes differ");
      double d2 = 0.0;
      for (std::size_t i = 0; i < latents[k].size(); ++i) {
        const double diff = latents[k][i] - latents[l][i];
        d2 += diff * diff;
      }
      const double r = std::sqrt(d2) - targets(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
      total += r * r;
    }
  }
  return 2.0 / (static_cast<double>(b) * static_cast<double>(b - 1)) * total;
}

double total_stage1_loss(double restore, double align, const StageOneWeights& w) {
  return w.lambda_r * restore + w.lambda_a * align;
}

ad::Var soft_iou_loss_on_tape(ad::Tape& tape, ad::Var probs, const Matrix& targets, const Matrix& slot_mask) {
  const Matrix& p = tape.value(probs);
  if (p.rows() != targets.rows() || p.cols() != targets.cols() || p.rows() != slot_mask.rows() ||
      p.cols() != slot_mask.cols())
    throw Error(ErrorCode::kShapeMismatch, "soft IoU shapes differ");
  const Eigen::Index frames = p.rows();
  Eigen::VectorXd inter(frames), uni(frames);
  double mean_iou = 0.0;
  for (Eigen::Index t = 0; t < frames; ++t) {
    const auto pm = p.row(t).cwiseProduct(slot_mask.row(t));
    const auto gm = targets.row(t).cwiseProduct(slot_mask.row(t));
    inter(t) = pm.dot(gm);
    uni(t) = pm.sum() + gm.sum() - inter(t);
    mean_iou += uni(t) > 0.0 ? inter(t) / uni(t) : 1.0;
  }
  mean_iou /= static_cast<double>(frames);
  Matrix out(1, 1);
  out(0, 0) = 1.0 - mean_iou;
  return tape.record(std::move(out), tape.requires_grad(probs),
                     [probs, targets, slot_mask, inter, uni, frames](ad::Tape& tp, std::size_t self) {
                       const double g = tp.output_grad(self)(0, 0);
                       Matrix grad = Matrix::Zero(targets.rows(), targets.cols());
                       for (Eigen::Index t = 0; t < frames; ++t) {
                         if (!(uni(t) > 0.0)) continue;
                         const double u2 = uni(t) * uni(t);
                         // d IoU / d p = (g U - I (1 - g)) / U^2 on masked slots.
                         grad.row(t) = ((targets.row(t).array() * uni(t) -
                                         inter(t) * (1.0 - targets.row(t).array())) /
                                        u2)
                                           .matrix()
                                           .cwiseProduct(slot_mask.row(t));
                       }
                       tp.accumulate(probs, grad * (-g / static_cast<double>(frames)));
                     });
}

ad::Var alignment_loss_on_tape(ad::Tape& tape, ad::Var latents, const Matrix& targets) {
  const Matrix& s = tape.value(latents);
  const Eigen::Index b = s.rows();
  if (b < 2) throw Error(ErrorCode::kBatchTooSmall, "alignment needs at least two scenarios");
  if (targets.rows() != b || targets.cols() != b) throw Error(ErrorCode::kShapeMismatch, "target matrix must be B x B");
  const double c = 2.0 / (static_cast<double>(b) * static_cast<double>(b - 1));
  Matrix dist = Matrix::Zero(b, b);
  double total = 0.0;
  for (Eigen::Index k = 0; k < b; ++k)
    for (Eigen::Index l = k + 1; l < b; ++l) {
      dist(k, l) = dist(l, k) = (s.row(k) - s.row(l)).norm();
      const double r = dist(k, l) - targets(k, l);
      total += r * r;
    }
  Matrix out(1, 1);
  out(0, 0) = c * total;
  return tape.record(std::move(out), tape.requires_grad(latents),
                     [latents, targets, dist, c, b](ad::Tape& tp, std::size_t self) {
                       const double g = tp.output_grad(self)(0, 0);
                       const Matrix& sv = tp.value(latents);
                       Matrix grad = Matrix::Zero(sv.rows(), sv.cols());
                       for (Eigen::Index k = 0; k < b; ++k)
                         for (Eigen::Index l = k + 1; l < b; ++l) {
                           if (!(dist(k, l) > 0.0)) continue;  // subgradient 0 at coincident latents
                           const double coef = c * 2.0 * (dist(k, l) - targets(k, l)) / dist(k, l);
                           const Eigen::RowVectorXd d = coef * (sv.row(k) - sv.row(l));
                           grad.row(k) += d;
                           grad.row(l) -= d;
                         }
                       tp.accumulate(latents, grad * g);
                     });
}

BatchLoss stage1_batch_loss(ad::Tape& tape, const ParamVars& p, std::span<const ScenarioInputs* const> batch,
                            const Matrix& targets, const StageOneWeights& w, const ModelConfig& cfg,
                            bool training) {
  using namespace ad;
  if (batch.empty()) throw Error(ErrorCode::kBatchTooSmall, "empty batch");
  const auto b = static_cast<double>(batch.size());
  std::vector<Var> latents, restores;
  for (const ScenarioInputs* in : batch) latents.push_back(encode_on_tape(tape, p, *in, cfg));
  const bool batch_stats = training && batch.size() >= 2;
  Var standardized = batch_stats ? batch_standardize(tape, concat_rows(tape, latents), kLatentVarianceFloor) : Var{};
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Var input = batch_stats ? slice_rows(tape, standardized, static_cast<Eigen::Index>(k), 1)
                                  : normalize_latent_on_tape(tape, p, latents[k]);
    const Var probs = decode_on_tape(tape, p, input, *batch[k], cfg);
    restores.push_back(soft_iou_loss_on_tape(tape, probs, batch[k]->edge_targets, batch[k]->slot_mask));
  }
  BatchLoss out;
  out.latents = latents;
  Var restore = scale(tape, sum(tape, concat_rows(tape, restores)), 1.0 / b);
  out.restore = tape.value(restore)(0, 0);
  out.mean_iou = 1.0 - out.restore;
  std::vector<Var> terms;
  if (w.lambda_r != 0.0) terms.push_back(scale(tape, restore, w.lambda_r));
  if (batch.size() >= 2) {
    Var align = alignment_loss_on_tape(tape, concat_rows(tape, latents), targets);
    out.align = tape.value(align)(0, 0);
    if (w.lambda_a != 0.0) terms.push_back(scale(tape, align, w.lambda_a));
  }
  if (terms.empty()) {
    out.total = tape.constant(Matrix::Zero(1, 1));
  } else {
    out.total = terms.size() == 1 ? terms[0] : add(tape, terms[0], terms[1]);
  }
  return out;
}

}  // namespace scenario_rag

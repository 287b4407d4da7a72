#include "scenario_rag/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scenario_rag/error.hpp"

namespace scenario_rag {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw Error(ErrorCode::kLengthMismatch,
                std::string(what) + ": lengths " + std::to_string(a) + " and " + std::to_string(b) + " differ");
}

double count_positives(std::span<const double> labels) {
  double n = 0.0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw Error(ErrorCode::kValidation, "focal labels must be 0 or 1");
    n += y;
  }
  return n;
}

double huber(double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; }
double huber_grad(double x) { return std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0); }

void check_batch(const TrajectoryBatch& b) {
  const auto np = static_cast<std::size_t>(b.path_queries);
  const auto ns = static_cast<std::size_t>(b.speed_queries);
  if (b.path_queries < 1 || b.speed_queries < 1)
    throw Error(ErrorCode::kShapeMismatch, "query counts must be >= 1");
  if (b.path_pred.size() != np || b.path_gt.size() != np)
    throw Error(ErrorCode::kShapeMismatch, "path lists must hold " + std::to_string(np) + " points");
  if (b.speed_pred.size() != ns || b.speed_gt.size() != ns)
    throw Error(ErrorCode::kShapeMismatch, "speed lists must hold " + std::to_string(ns) + " entries");
}

}  // namespace

void check_config(const FocalConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw Error(ErrorCode::kValidation, "focal alpha must be in (0, 1)");
  if (!(cfg.gamma >= 0.0)) throw Error(ErrorCode::kValidation, "focal gamma must be >= 0");
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.5)) throw Error(ErrorCode::kValidation, "focal epsilon must be in (0, 0.5)");
}

FocalResult focal_loss(std::span<const double> probs, std::span<const double> labels, const FocalConfig& cfg) {
  check_config(cfg);
  check_lengths(probs.size(), labels.size(), "focal_loss");
  const double n_pos = count_positives(labels);
  if (n_pos == 0.0) return {0.0, true};
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], cfg.epsilon, 1.0 - cfg.epsilon);
    if (labels[i] == 1.0)
      sum += cfg.alpha * std::pow(1.0 - p, cfg.gamma) * std::log(p);
    else
      sum += (1.0 - cfg.alpha) * std::pow(p, cfg.gamma) * std::log(1.0 - p);
  }
  return {-sum / n_pos, false};
}

std::vector<double> focal_loss_grad(std::span<const double> probs, std::span<const double> labels,
                                    const FocalConfig& cfg) {
  check_config(cfg);
  check_lengths(probs.size(), labels.size(), "focal_loss_grad");
  std::vector<double> g(probs.size(), 0.0);
  const double n_pos = count_positives(labels);
  if (n_pos == 0.0) return g;
  const double a = cfg.alpha, gm = cfg.gamma;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (p < cfg.epsilon || p > 1.0 - cfg.epsilon) continue;
    double d = 0.0;
    if (labels[i] == 1.0) {
      const double q = 1.0 - p;
      d = a * std::pow(q, gm) / p;
      if (gm != 0.0) d -= a * gm * std::pow(q, gm - 1.0) * std::log(p);
    } else {
      const double q = 1.0 - p;
      d = -(1.0 - a) * std::pow(p, gm) / q;
      if (gm != 0.0) d += (1.0 - a) * gm * std::pow(p, gm - 1.0) * std::log(q);
    }
    g[i] = -d / n_pos;
  }
  return g;
}

double smooth_l1(std::span<const double> pred, std::span<const double> gt) {
  check_lengths(pred.size(), gt.size(), "smooth_l1");
  if (pred.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += huber(pred[i] - gt[i]);
  return sum / static_cast<double>(pred.size());
}

std::vector<double> smooth_l1_grad(std::span<const double> pred, std::span<const double> gt) {
  check_lengths(pred.size(), gt.size(), "smooth_l1_grad");
  std::vector<double> g(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    g[i] = huber_grad(pred[i] - gt[i]) / static_cast<double>(pred.size());
  return g;
}

double smooth_l1_positive(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& gt,
                          const std::vector<bool>& positive) {
  check_lengths(pred.size(), gt.size(), "smooth_l1_positive");
  check_lengths(pred.size(), positive.size(), "smooth_l1_positive");
  double sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!positive[i]) continue;
    sum += smooth_l1(pred[i], gt[i]);
    ++n_pos;
  }
  return n_pos == 0 ? 0.0 : sum / static_cast<double>(n_pos);
}

double perception_loss(double cls_part, double reg_part, const PerceptionWeights& w) {
  return w.lambda_c * cls_part + w.lambda_e * reg_part;
}

double trajectory_loss(const TrajectoryBatch& b) {
  check_batch(b);
  double path = 0.0, speed = 0.0;
  for (std::size_t g = 0; g < b.path_pred.size(); ++g)
    for (int c = 0; c < 2; ++c) {
      const double d = b.path_pred[g][c] - b.path_gt[g][c];
      path += d * d;
    }
  for (std::size_t g = 0; g < b.speed_pred.size(); ++g)
    for (int c = 0; c < 2; ++c) {
      const double d = b.speed_pred[g][c] - b.speed_gt[g][c];
      speed += d * d;
    }
  return b.lambda_p * path + b.lambda_s * speed;
}

TrajectoryGrad trajectory_loss_grad(const TrajectoryBatch& b) {
  check_batch(b);
  TrajectoryGrad g;
  for (std::size_t i = 0; i < b.path_pred.size(); ++i)
    g.path.push_back({2.0 * b.lambda_p * (b.path_pred[i][0] - b.path_gt[i][0]),
                      2.0 * b.lambda_p * (b.path_pred[i][1] - b.path_gt[i][1])});
  for (std::size_t i = 0; i < b.speed_pred.size(); ++i)
    g.speed.push_back({2.0 * b.lambda_s * (b.speed_pred[i][0] - b.speed_gt[i][0]),
                       2.0 * b.lambda_s * (b.speed_pred[i][1] - b.speed_gt[i][1])});
  return g;
}

}  // namespace scenario_rag

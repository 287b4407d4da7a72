#pragma once

#include <array>
#include <span>
#include <vector>

namespace scenario_rag {

struct FocalConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  double epsilon = 1e-7;  // probabilities are clamped to [eps, 1 - eps]
};

// Throws Error{kValidation} unless 0 < alpha < 1, gamma >= 0 and 0 < eps < 0.5.
void check_config(const FocalConfig& cfg);

struct FocalResult {
  double loss = 0.0;
  bool no_positives = false;  // loss is 0 and the gradient empty-valued
};

// Label-gated focal loss normalized by the number of positives. Labels must
// be 0 or 1. Throws Error{kLengthMismatch} / Error{kValidation}.
FocalResult focal_loss(std::span<const double> probs, std::span<const double> labels, const FocalConfig& cfg = {});
// d loss / d p; zero where the clamp is active or when there are no positives.
std::vector<double> focal_loss_grad(std::span<const double> probs, std::span<const double> labels,
                                    const FocalConfig& cfg = {});

// Mean over components of the Huber-style penalty with transition at 1.
double smooth_l1(std::span<const double> pred, std::span<const double> gt);
std::vector<double> smooth_l1_grad(std::span<const double> pred, std::span<const double> gt);

// Regression term over matched samples: (1 / N_pos) sum over positives of
// smooth_l1(pred_i, gt_i). Returns 0 when no sample is positive.
double smooth_l1_positive(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& gt,
                          const std::vector<bool>& positive);

struct PerceptionWeights {
  double lambda_c = 1.0;
  double lambda_e = 5.0;
};

double perception_loss(double cls_part, double reg_part, const PerceptionWeights& w = {});

inline constexpr int kPathQueries = 20;
inline constexpr int kSpeedQueries = 10;

using Point = std::array<double, 2>;

struct TrajectoryBatch {
  std::vector<Point> path_pred;
  std::vector<Point> path_gt;
  std::vector<Point> speed_pred;
  std::vector<Point> speed_gt;
  double lambda_p = 1.0;
  double lambda_s = 1.0;
  int path_queries = kPathQueries;
  int speed_queries = kSpeedQueries;
};

// lambda_p sum |p - p_hat|^2 + lambda_s sum |v - v_hat|^2. Throws
// Error{kShapeMismatch} unless every list has its configured length.
double trajectory_loss(const TrajectoryBatch& batch);

struct TrajectoryGrad {
  std::vector<Point> path;   // d loss / d path_pred
  std::vector<Point> speed;  // d loss / d speed_pred
};
TrajectoryGrad trajectory_loss_grad(const TrajectoryBatch& batch);

}  // namespace scenario_rag

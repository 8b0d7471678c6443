#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "vplab/autograd/tape.hpp"
#include "vplab/segcore/types.hpp"

namespace vplab::trainer {

struct TrainConfig {
  int epochs = 12;
  double lr = 1e-3;
  int batch_size = 4;
  double lambda_focal = 1.0;
  double lambda_dice = 1.0;
  double focal_gamma = 2.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless lr > 0, epochs >= 0, batch_size >= 1 and the
  /// loss weights are non-negative and not both zero.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossTerms {
  double focal = 0.0;
  double dice = 0.0;
  double total = 0.0;
  Mat grad;  ///< d total / d logits, same shape as the logits
};

/// Mean focal loss over pixels: -(1 - p_t)^gamma log p_t.
double focal_loss(const Mat& logits, const Mat& target, double gamma);
/// 1 - (2 sum(p g) + 1) / (sum(p) + sum(g) + 1).
double dice_loss(const Mat& logits, const Mat& target);

/// Nearest-neighbour resample of `gt` to the logit grid, as 0/1 doubles.
Mat target_grid(const BinaryMask& gt, int height, int width);

/// lambda_focal * focal + lambda_dice * dice on sigmoid probabilities, with
/// the analytic gradient with respect to the logits.
LossTerms segmentation_loss(const Mat& logits, const BinaryMask& gt, const TrainConfig& cfg);
LossTerms segmentation_loss_grid(const Mat& logits, const Mat& target, const TrainConfig& cfg);

/// Records the segmentation loss of a column of logits (rows in row-major
/// pixel order) as a 1x1 tape node.
ad::Var segmentation_loss_node(ad::Var logits, const Mat& target, const TrainConfig& cfg, LossTerms* terms = nullptr);

}  // namespace vplab::trainer

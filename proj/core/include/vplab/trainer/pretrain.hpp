#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "vplab/segcore/weights.hpp"
#include "vplab/trainer/finetune.hpp"

namespace vplab::trainer {

struct PretrainConfig {
  std::string family = "shapes";
  int images = 4000;
  int image_size = 64;
  int steps = 12000;
  int batch_size = 8;
  double lr = 2e-3;
  double lr_final = 2e-4;      ///< cosine decay target
  double iou_weight = 1.0;     ///< weight of the IoU-head regression term
  std::uint64_t seed = 1;
};

/// Trains every base decoder array on a synthetic family. Prompts are the
/// default matcher's self-match points, coverage points or 1-5 random
/// positives, sometimes with one negative. Loss: focal + dice on the
/// best slot plus squared error of that slot's predicted IoU. Returns f32
/// rounded weights so the result equals its own SEGC1 round trip.
DecoderWeights pretrain_base(const DecoderConfig& cfg, const PretrainConfig& pc, const ProgressSink& sink = {});

}  // namespace vplab::trainer

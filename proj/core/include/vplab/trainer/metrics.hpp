#pragma once

#include <vector>

#include "vplab/segcore/types.hpp"

namespace vplab::trainer {

/// |a & b| / |a | b|; two empty masks score 1. Throws ShapeError on size mismatch.
double iou(const BinaryMask& a, const BinaryMask& b);

/// Mean IoU in percent. Throws ShapeError when the lists or any pair differ in size.
double evaluate_miou(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts);

}  // namespace vplab::trainer

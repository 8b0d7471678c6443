#include "vplab/trainer/metrics.hpp"

#include "vplab/common/error.hpp"

namespace vplab::trainer {

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.size() != b.size()) throw ShapeError("mask sizes differ");
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += (a.bits[i] & b.bits[i]);
    uni += (a.bits[i] | b.bits[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double evaluate_miou(const std::vector<BinaryMask>& preds, const std::vector<BinaryMask>& gts) {
  if (preds.size() != gts.size()) throw ShapeError("prediction and ground-truth lists differ in length");
  if (preds.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += iou(preds[i], gts[i]);
  return 100.0 * (sum / static_cast<double>(preds.size()));
}

}  // namespace vplab::trainer

#pragma once

#include <functional>
#include <vector>

#include "vplab/common/error.hpp"
#include "vplab/matcher/matcher.hpp"
#include "vplab/peft/state.hpp"
#include "vplab/segcore/weights.hpp"
#include "vplab/trainer/loss.hpp"
#include "vplab/trainer/synthetic.hpp"

namespace vplab::trainer {

struct ProgressEvent {
  int epoch = 0;   ///< 1-based
  int epochs = 0;
  double loss = 0.0;
};
using ProgressSink = std::function<void(const ProgressEvent&)>;

struct TrainHistory {
  std::vector<double> epoch_loss;  ///< mean example loss seen during each epoch
};

struct FinetuneResult {
  peft::EPEFTState state;
  TrainHistory history;
};

/// Thrown when a loss or activation becomes non-finite. Carries the last
/// state whose every array was finite and the history up to that point.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, peft::EPEFTState last, TrainHistory history)
      : Error(what), last_state(std::move(last)), history(std::move(history)) {}

  peft::EPEFTState last_state;
  TrainHistory history;
};

/// Where training prompts come from. With a reference set, each example is
/// prompted exactly as the matcher would prompt it at inference time, falling
/// back to ground-truth cells when nothing matches; without one, prompts are
/// sampled from the ground-truth coverage of the feature grid.
struct PromptPolicy {
  const matcher::ReferenceSet* reference = nullptr;
  matcher::MatcherParams params;
  std::string encoder_id = "toy-patch";
};

/// Positive points at the best-covered cells of `gt` (at most k_max, greedy
/// NMS). Never empty for a non-empty mask.
std::vector<PointPrompt> gt_points(const BinaryMask& gt, int stride, const matcher::MatcherParams& params);

/// Trains only the arrays of `state` with Adam; `base` and `data` are not
/// modified. Deterministic for a fixed cfg.seed. Throws ConfigMismatch if
/// `state` was attached to another decoder config, TrainingDiverged on a
/// non-finite loss.
FinetuneResult finetune(const DecoderWeights& base, peft::EPEFTState state, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg, const ProgressSink& sink = {}, const PromptPolicy& prompts = {});

}  // namespace vplab::trainer

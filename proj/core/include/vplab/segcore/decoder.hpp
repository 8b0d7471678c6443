#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vplab/autograd/tape.hpp"
#include "vplab/peft/state.hpp"
#include "vplab/segcore/types.hpp"
#include "vplab/segcore/weights.hpp"

namespace vplab {

struct GraphOptions {
  bool train_base = false;  ///< record gradients for base arrays
  bool train_peft = false;  ///< record gradients for EPEFT arrays
};

/// Builds the two-way mask decoder on a tape. One instance per forward pass.
///
/// Token stream: [memory tokens; iou token; mask tokens; prompt tokens].
/// Image stream: [memory tokens; projected image cells].
/// Per block: token self-attention, token->image cross-attention (width
/// d_down), MLP (+ adapter), image->token cross-attention; then a final
/// token->image attention. Memory rows are stripped before the upscaler and
/// the hypernetwork mask head.
class DecoderGraph {
 public:
  struct Output {
    std::vector<ad::Var> slot_logits;  ///< each (out_h * out_w) x 1, row-major
    ad::Var iou;                       ///< 1 x n_mask_tokens, in (0, 1)
    int out_h = 0;
    int out_w = 0;
  };

  DecoderGraph(ad::Tape& tape, const DecoderWeights& weights, const peft::EPEFTState* peft, GraphOptions opts = {});

  Output forward(ad::Var image_features, ad::Var prompts, int h, int w);

  /// Prompt tokens built on the tape so the polarity embeddings can train.
  ad::Var prompt_tokens(std::span<const PointPrompt> points, ImageSize img_size);

  ad::Var linear(const std::string& path, ad::Var x);
  ad::Var attention(const std::string& prefix, ad::Var q_in, ad::Var k_in, ad::Var v_in, Eigen::Index key_memory,
                    ad::Var gate, int ia3_unit);
  ad::Var adapter(int block, ad::Var x);

  [[nodiscard]] peft::ArrayMap base_gradients() const;
  [[nodiscard]] peft::ArrayMap peft_gradients() const;

 private:
  ad::Var base(const std::string& name);
  ad::Var delta(const std::string& name, const Mat& value);
  ad::Var mlp3(const std::string& prefix, ad::Var x);
  ad::Var norm(const std::string& prefix, ad::Var x);

  ad::Tape& tape_;
  const DecoderWeights& weights_;
  const peft::EPEFTState* peft_;
  GraphOptions opts_;
  std::unordered_map<std::string, ad::Var> base_vars_;
  std::unordered_map<std::string, ad::Var> peft_vars_;
};

/// Runs the decoder. When `peft` is given every attached delta is applied
/// (LoRA is skipped if the weights already carry merged LoRA deltas).
/// Throws ShapeError on width mismatches, ConfigMismatch if `peft` was
/// attached to a different decoder config, NumericalError on non-finite
/// intermediates.
MaskLogits decode(const FeatureGrid& grid, const TokenSequence& prompts, const DecoderWeights& weights,
                  const peft::EPEFTState* peft = nullptr);

/// Bilinear-resizes slot `slot` to `target_size` and thresholds (strictly greater).
BinaryMask binarize(const MaskLogits& ml, int slot, ImageSize target_size, float threshold = 0.0f);

}  // namespace vplab

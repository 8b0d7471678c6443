#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "vplab/common/tensor.hpp"
#include "vplab/peft/config.hpp"
#include "vplab/peft/state.hpp"
#include "vplab/segcore/weights.hpp"

namespace vplab::peft {

/// Resolves `cfg` against the decoder's layer inventory and initializes every
/// branch so the decoder output is unchanged: B = 0, IA3 vectors = 1,
/// gates = 0, W_up = 0, cond_mlp last layer = 0. Throws
/// TargetResolutionError when a LoRA pattern or IA3 unit matches nothing.
EPEFTState attach(const EPEFTConfig& cfg, const DecoderConfig& decoder);
EPEFTState attach(const EPEFTConfig& cfg, const DecoderWeights& weights);

/// Layer paths matched by a glob pattern ('*' = any run of characters).
std::vector<std::string> resolve_targets(const std::vector<std::string>& patterns, const DecoderConfig& decoder);

// ---------------------------------------------------------------------------
// Single-vector reference forms of each technique.
// ---------------------------------------------------------------------------

/// W x + (alpha / r) B (A x).
Vec lora_forward(const Vec& x, const Mat& W, const LoRABranch& branch);

struct IA3Scaled {
  Vec keys;
  Vec values;
  Vec ff_inner;
};
/// Elementwise l_k * keys, l_v * values, l_ff * ff_inner.
IA3Scaled ia3_forward(const Vec& keys, const Vec& values, const Vec& ff_inner, const Mat& l_k, const Mat& l_v,
                      const Mat& l_ff);
IA3Scaled ia3_forward(const Vec& keys, const Vec& values, const Vec& ff_inner, const IA3Attention& attn,
                      const IA3Branch& branch);

/// x + W_up gelu(W_down x + b_down) + b_up.
Vec adapter_forward(const Vec& x, const AdapterBlock& blk);

struct StripPlan {
  int token_prefix = 0;  ///< injected rows at the head of the token stream
  int image_prefix = 0;  ///< injected rows at the head of the image stream
  std::vector<int> token_positions;
  std::vector<int> image_positions;
};

struct InjectedSequences {
  Mat tokens;
  Mat image;
  StripPlan strip;
};

/// Prepends (memory tokens + cond_mlp(mean_image_feature)) to both streams.
/// `adapter` may lack a cond_mlp, in which case tokens are used as is.
InjectedSequences inject_prompts(const Mat& token_seq, const Mat& image_seq, const PromptBank& bank,
                                 const Vec& mean_image_feature, const AdapterSet& adapter);

// ---------------------------------------------------------------------------
// Accounting and deployment
// ---------------------------------------------------------------------------

struct TrainableCounts {
  long long lora = 0;
  long long ia3 = 0;
  long long prompts = 0;
  long long adapter = 0;
  long long cond_mlp = 0;
  [[nodiscard]] long long total() const { return lora + ia3 + prompts + adapter + cond_mlp; }
};

/// Closed-form counts from branch shapes:
/// LoRA sum r (d_in + d_out); IA3 sum |l_k| + |l_v| + |l_ff|;
/// prompts (m_tok + m_img) d + 2; adapter per block 2 d b + b + d;
/// cond_mlp 2 (d^2 + d).
TrainableCounts count_trainable(const EPEFTState& state);

/// Folds every LoRA delta into a copy of `weights`. Throws MergeStateError
/// if `weights` already carry merged deltas.
DecoderWeights merge_lora(const EPEFTState& state, const DecoderWeights& weights);
/// Inverse of merge_lora. Throws MergeStateError unless `merged` carries
/// exactly this state's deltas.
DecoderWeights unmerge_lora(const EPEFTState& state, const DecoderWeights& merged);

/// EPEF1 delta checkpoint: magic "EPEF1", then the shared container layout
/// with header keys {config, decoder, fingerprint}. Base weights are never
/// included.
std::string save_delta(const EPEFTState& state);
/// Throws ConfigMismatch when the checkpoint was written for another
/// decoder config or its fingerprint disagrees with its config;
/// CorruptCheckpoint on truncation or malformed content.
EPEFTState load_delta(std::string_view bytes, const DecoderConfig& decoder);

/// Overwrites every array of `state` with `value` scaled random noise; used
/// by tests and gradient checks to move away from the identity init.
void randomize(EPEFTState& state, std::uint64_t seed, double scale = 0.1);

}  // namespace vplab::peft

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vplab/common/tensor.hpp"
#include "vplab/peft/config.hpp"
#include "vplab/segcore/types.hpp"

namespace vplab::peft {

/// Low-rank delta on one linear layer: W' = W + (alpha / rank) * B * A.
struct LoRABranch {
  std::string target_layer;
  int rank = 0;
  double alpha = 0.0;
  Mat A;  ///< rank x d_in, seeded random
  Mat B;  ///< d_out x rank, zero at init

  [[nodiscard]] double scaling() const { return alpha / rank; }
};

/// Key/value rescaling of one attention module.
struct IA3Attention {
  std::string attention;  ///< path prefix, e.g. "blocks.0.cross_t2i"
  Mat l_k;                ///< 1 x internal width
  Mat l_v;                ///< 1 x internal width
};

/// IA3 vectors for one unit (a two-way block, or the final attention when
/// target_block == depth). l_ff is empty for the final attention.
struct IA3Branch {
  int target_block = 0;
  std::vector<IA3Attention> attentions;
  Mat l_ff;  ///< 1 x d_mlp
};

/// Memory tokens prepended to the token stream and the image stream. Their
/// contribution as attention keys/values is multiplied by the stream gate.
struct PromptBank {
  int m_tok = 0;
  int m_img = 0;
  Mat tokens_tok;  ///< m_tok x d
  Mat tokens_img;  ///< m_img x d
  Mat gate_tok;    ///< 1x1, zero at init
  Mat gate_img;    ///< 1x1, zero at init
};

/// Residual bottleneck after one block's MLP: x + W_up gelu(W_down x + b_down) + b_up.
struct AdapterBlock {
  int block = 0;
  int bottleneck = 0;
  Mat W_down;  ///< b x d
  Mat b_down;  ///< 1 x b
  Mat W_up;    ///< d x b, zero at init
  Mat b_up;    ///< 1 x d, zero at init
};

/// d -> d -> d GELU MLP mapping the mean image embedding onto an offset
/// added to every memory token. Present only when prompts and adapter are
/// both enabled; its last layer starts at zero.
struct CondMlp {
  Mat fc1_weight;  ///< d x d
  Mat fc1_bias;    ///< 1 x d
  Mat fc2_weight;  ///< d x d, zero at init
  Mat fc2_bias;    ///< 1 x d, zero at init
};

struct AdapterSet {
  std::vector<AdapterBlock> blocks;
  std::optional<CondMlp> cond_mlp;
};

/// Every trainable delta, detached from the frozen base decoder.
struct EPEFTState {
  EPEFTConfig config;
  DecoderConfig decoder;
  std::vector<LoRABranch> lora;
  std::vector<IA3Branch> ia3;
  PromptBank prompts;
  AdapterSet adapter;
  std::string config_fingerprint;

  [[nodiscard]] const LoRABranch* find_lora(std::string_view layer) const;
  [[nodiscard]] const IA3Branch* find_ia3(int unit) const;
  [[nodiscard]] const IA3Attention* find_ia3_attention(int unit, std::string_view attention) const;
  [[nodiscard]] const AdapterBlock* find_adapter(int block) const;

  /// Visits every trainable array as (name, matrix) in a fixed order; this
  /// order is the checkpoint manifest order.
  template <typename F>
  void visit(F&& fn) {
    visit_impl(*this, fn);
  }
  template <typename F>
  void visit(F&& fn) const {
    visit_impl(*this, fn);
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& s, F& fn);
};

// Array names used in gradients, checkpoints and enumeration.
std::string lora_name(std::string_view layer, std::string_view part);
std::string ia3_name(int unit, std::string_view attention, std::string_view part);
std::string ia3_ff_name(int unit);
std::string adapter_name(int block, std::string_view part);

template <typename Self, typename F>
void EPEFTState::visit_impl(Self& s, F& fn) {
  for (auto& br : s.lora) {
    fn(lora_name(br.target_layer, "A"), br.A);
    fn(lora_name(br.target_layer, "B"), br.B);
  }
  for (auto& br : s.ia3) {
    for (auto& a : br.attentions) {
      fn(ia3_name(br.target_block, a.attention, "l_k"), a.l_k);
      fn(ia3_name(br.target_block, a.attention, "l_v"), a.l_v);
    }
    if (br.l_ff.size() > 0) fn(ia3_ff_name(br.target_block), br.l_ff);
  }
  if (s.config.use_prompts) {
    if (s.prompts.m_tok > 0) fn(std::string("prompts.tokens_tok"), s.prompts.tokens_tok);
    if (s.prompts.m_img > 0) fn(std::string("prompts.tokens_img"), s.prompts.tokens_img);
    fn(std::string("prompts.gate_tok"), s.prompts.gate_tok);
    fn(std::string("prompts.gate_img"), s.prompts.gate_img);
  }
  for (auto& blk : s.adapter.blocks) {
    fn(adapter_name(blk.block, "W_down"), blk.W_down);
    fn(adapter_name(blk.block, "b_down"), blk.b_down);
    fn(adapter_name(blk.block, "W_up"), blk.W_up);
    fn(adapter_name(blk.block, "b_up"), blk.b_up);
  }
  if (s.adapter.cond_mlp) {
    auto& c = *s.adapter.cond_mlp;
    fn(std::string("cond_mlp.fc1.weight"), c.fc1_weight);
    fn(std::string("cond_mlp.fc1.bias"), c.fc1_bias);
    fn(std::string("cond_mlp.fc2.weight"), c.fc2_weight);
    fn(std::string("cond_mlp.fc2.bias"), c.fc2_bias);
  }
}

/// Named arrays, e.g. gradients keyed like EPEFTState::visit.
using ArrayMap = std::map<std::string, Mat>;

}  // namespace vplab::peft

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vplab::peft {

enum class Technique { lora, ia3, prompts, adapter };

std::string to_string(Technique t);

/// Which parameter-efficient techniques to attach to the mask decoder, and
/// their sizes. Serialized as a JSON document; see README for the schema.
struct EPEFTConfig {
  bool use_lora = true;
  bool use_ia3 = true;
  bool use_prompts = true;
  bool use_adapter = true;

  int lora_rank = 4;
  double lora_alpha = 4.0;
  /// Glob patterns ('*' matches any run of characters) over linear-layer paths.
  std::vector<std::string> lora_targets = {"*.q_proj", "*.v_proj", "blocks.*.mlp.lin1", "blocks.*.mlp.lin2"};

  /// IA3 units: 0..depth-1 are two-way blocks, depth is the final attention.
  /// Empty selects every unit.
  std::vector<int> ia3_blocks;

  int m_tok = 25;
  int m_img = 25;

  /// 0 selects d / 8.
  int adapter_bottleneck = 0;

  std::uint64_t seed = 0;

  /// Every technique on, default sizes.
  static EPEFTConfig ensemble();
  /// Exactly one technique on, default sizes.
  static EPEFTConfig only(Technique t);

  [[nodiscard]] bool enabled(Technique t) const;
  /// Throws ConfigError unless at least one technique is on and sizes are sane.
  void validate() const;
  /// Stable hex digest of the canonical JSON form.
  [[nodiscard]] std::string fingerprint() const;

  friend bool operator==(const EPEFTConfig&, const EPEFTConfig&) = default;
};

void to_json(nlohmann::json& j, const EPEFTConfig& c);
void from_json(const nlohmann::json& j, EPEFTConfig& c);

}  // namespace vplab::peft

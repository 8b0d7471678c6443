#include "vplab/peft/state.hpp"

namespace vplab::peft {

std::string lora_name(std::string_view layer, std::string_view part) {
  return "lora." + std::string(layer) + "." + std::string(part);
}

std::string ia3_name(int unit, std::string_view attention, std::string_view part) {
  return "ia3." + std::to_string(unit) + "." + std::string(attention) + "." + std::string(part);
}

std::string ia3_ff_name(int unit) { return "ia3." + std::to_string(unit) + ".l_ff"; }

std::string adapter_name(int block, std::string_view part) {
  return "adapter." + std::to_string(block) + "." + std::string(part);
}

const LoRABranch* EPEFTState::find_lora(std::string_view layer) const {
  for (const auto& br : lora) {
    if (br.target_layer == layer) return &br;
  }
  return nullptr;
}

const IA3Branch* EPEFTState::find_ia3(int unit) const {
  for (const auto& br : ia3) {
    if (br.target_block == unit) return &br;
  }
  return nullptr;
}

const IA3Attention* EPEFTState::find_ia3_attention(int unit, std::string_view attention) const {
  const IA3Branch* br = find_ia3(unit);
  if (br == nullptr) return nullptr;
  for (const auto& a : br->attentions) {
    if (a.attention == attention) return &a;
  }
  return nullptr;
}

const AdapterBlock* EPEFTState::find_adapter(int block) const {
  for (const auto& b : adapter.blocks) {
    if (b.block == block) return &b;
  }
  return nullptr;
}

}  // namespace vplab::peft

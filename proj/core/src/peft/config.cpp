#include "vplab/peft/config.hpp"

#include "vplab/common/error.hpp"
#include "vplab/common/hash.hpp"

namespace vplab::peft {

std::string to_string(Technique t) {
  switch (t) {
    case Technique::lora: return "lora";
    case Technique::ia3: return "ia3";
    case Technique::prompts: return "prompts";
    case Technique::adapter: return "adapter";
  }
  return "unknown";
}

EPEFTConfig EPEFTConfig::ensemble() { return EPEFTConfig{}; }

EPEFTConfig EPEFTConfig::only(Technique t) {
  EPEFTConfig c;
  c.use_lora = t == Technique::lora;
  c.use_ia3 = t == Technique::ia3;
  c.use_prompts = t == Technique::prompts;
  c.use_adapter = t == Technique::adapter;
  return c;
}

bool EPEFTConfig::enabled(Technique t) const {
  switch (t) {
    case Technique::lora: return use_lora;
    case Technique::ia3: return use_ia3;
    case Technique::prompts: return use_prompts;
    case Technique::adapter: return use_adapter;
  }
  return false;
}

void EPEFTConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid EPEFTConfig: " + m); };
  if (!use_lora && !use_ia3 && !use_prompts && !use_adapter) fail("at least one technique must be enabled");
  if (use_lora) {
    if (lora_rank < 1) fail("lora_rank must be >= 1");
    if (lora_targets.empty()) fail("lora_targets is empty");
  }
  if (use_prompts && (m_tok < 0 || m_img < 0)) fail("m_tok and m_img must be >= 0");
  if (adapter_bottleneck < 0) fail("adapter_bottleneck must be >= 0");
}

std::string EPEFTConfig::fingerprint() const {
  const nlohmann::json j = *this;
  return sha256_hex(j.dump()).substr(0, 16);
}

void to_json(nlohmann::json& j, const EPEFTConfig& c) {
  j = nlohmann::json{{"use_lora", c.use_lora},
                     {"use_ia3", c.use_ia3},
                     {"use_prompts", c.use_prompts},
                     {"use_adapter", c.use_adapter},
                     {"lora_rank", c.lora_rank},
                     {"lora_alpha", c.lora_alpha},
                     {"lora_targets", c.lora_targets},
                     {"ia3_blocks", c.ia3_blocks},
                     {"m_tok", c.m_tok},
                     {"m_img", c.m_img},
                     {"adapter_bottleneck", c.adapter_bottleneck},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, EPEFTConfig& c) {
  const EPEFTConfig d;
  c.use_lora = j.value("use_lora", d.use_lora);
  c.use_ia3 = j.value("use_ia3", d.use_ia3);
  c.use_prompts = j.value("use_prompts", d.use_prompts);
  c.use_adapter = j.value("use_adapter", d.use_adapter);
  c.lora_rank = j.value("lora_rank", d.lora_rank);
  c.lora_alpha = j.value("lora_alpha", d.lora_alpha);
  c.lora_targets = j.value("lora_targets", d.lora_targets);
  c.ia3_blocks = j.value("ia3_blocks", d.ia3_blocks);
  c.m_tok = j.value("m_tok", d.m_tok);
  c.m_img = j.value("m_img", d.m_img);
  c.adapter_bottleneck = j.value("adapter_bottleneck", d.adapter_bottleneck);
  c.seed = j.value("seed", d.seed);
}

}  // namespace vplab::peft

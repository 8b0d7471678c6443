#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "vplab/common/rng.hpp"
#include "vplab/peft/config.hpp"
#include "vplab/segcore/types.hpp"
#include "vplab/segcore/weights.hpp"

namespace vplab::testing {

/// Pretrained tiny decoder shipped under tests/fixtures.
inline const DecoderWeights& fixture_weights() {
  static const DecoderWeights w = load_weights_file(VPLAB_FIXTURE);
  return w;
}

inline const DecoderWeights& random_tiny(std::uint64_t seed = 5) {
  static const DecoderWeights w = DecoderWeights::initialize(DecoderConfig::tiny(), seed);
  return w;
}

inline ImageRGB random_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  ImageRGB img(size, size, "rand-" + std::to_string(seed));
  for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
  return img;
}

inline BinaryMask random_mask(int h, int w, Rng& rng, double p = 0.5) {
  BinaryMask m(h, w);
  for (auto& b : m.bits) b = rng.uniform() < p ? 1 : 0;
  return m;
}

/// Random technique subset and sizes that still resolve on `dec`.
inline peft::EPEFTConfig random_epeft_config(Rng& rng, const DecoderConfig& dec) {
  peft::EPEFTConfig c;
  do {
    c.use_lora = rng.uniform() < 0.5;
    c.use_ia3 = rng.uniform() < 0.5;
    c.use_prompts = rng.uniform() < 0.5;
    c.use_adapter = rng.uniform() < 0.5;
  } while (!(c.use_lora || c.use_ia3 || c.use_prompts || c.use_adapter));
  c.lora_rank = rng.uniform_int(1, 8);
  c.lora_alpha = rng.uniform(0.5, 16.0);
  const std::vector<std::string> pool{"*.q_proj", "*.v_proj", "*.k_proj", "blocks.*.mlp.lin1", "hyper.*", "upscale.*"};
  c.lora_targets.clear();
  for (const auto& p : pool)
    if (rng.uniform() < 0.4) c.lora_targets.push_back(p);
  if (c.lora_targets.empty()) c.lora_targets.push_back(pool[static_cast<std::size_t>(rng.uniform_int(0, 5))]);
  c.ia3_blocks.clear();
  for (int u = 0; u <= dec.depth; ++u)
    if (rng.uniform() < 0.5) c.ia3_blocks.push_back(u);
  c.m_tok = rng.uniform_int(0, 30);
  c.m_img = rng.uniform_int(0, 30);
  c.adapter_bottleneck = rng.uniform_int(0, dec.d - 1);
  c.seed = rng.next_u64();
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vplab-test-" + std::to_string((static_cast<std::uint64_t>(rd()) << 32) | rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace vplab::testing

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vplab/common/tensor.hpp"
#include "vplab/segcore/types.hpp"

namespace vplab {

struct LinearLayerInfo {
  std::string path;
  int in = 0;
  int out = 0;
};

/// Every linear layer of the decoder for `cfg`, in forward order. These
/// paths are what LoRA target patterns are matched against.
std::vector<LinearLayerInfo> linear_layers(const DecoderConfig& cfg);

/// Name and (rows, cols) of every base array, in manifest order.
std::vector<std::pair<std::string, std::pair<int, int>>> parameter_shapes(const DecoderConfig& cfg);

/// Frozen base decoder parameters plus the encoder they were trained against.
struct DecoderWeights {
  DecoderConfig config;
  std::string encoder_id = "toy-patch";
  std::map<std::string, Mat, std::less<>> arrays;
  /// Fingerprint of the EPEFT state whose LoRA deltas are folded into these
  /// weights; empty for an unmerged base.
  std::string merged_lora;

  /// Random initialization (seeded); linear weights ~ N(0, 1/fan_in), zero biases.
  static DecoderWeights initialize(const DecoderConfig& cfg, std::uint64_t seed);

  [[nodiscard]] const Mat& at(std::string_view name) const;
  Mat& at(std::string_view name);
  [[nodiscard]] bool lora_merged() const { return !merged_lora.empty(); }
  [[nodiscard]] std::size_t parameter_count() const;
};

/// SEGC1 serialization: magic "SEGC1", then the shared container layout with
/// header keys {config, encoder_id, merged_lora}.
std::string save_weights(const DecoderWeights& w);
DecoderWeights load_weights(std::string_view bytes);
void save_weights_file(const DecoderWeights& w, const std::filesystem::path& path);
DecoderWeights load_weights_file(const std::filesystem::path& path);

/// SHA-256 of the SEGC1 bytes; used to prove the base stays frozen.
std::string weights_hash(const DecoderWeights& w);

}  // namespace vplab

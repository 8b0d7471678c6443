#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "vplab/segcore/types.hpp"

namespace vplab {

/// Frozen feature backbone. Implementations must be deterministic and safe
/// to call concurrently.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;

  [[nodiscard]] virtual std::string id() const = 0;
  [[nodiscard]] virtual int stride() const = 0;
  [[nodiscard]] virtual int dim() const = 0;
  [[nodiscard]] virtual FeatureGrid encode(const ImageRGB& img) const = 0;
};

/// Three 3x3 convolutions (zero padding 1; strides 2, 2, 1) with GELU
/// between stages; weights are drawn once from a fixed seed. The per-image
/// mean feature is subtracted from every cell.
class ToyPatchEncoder final : public ImageEncoder {
 public:
  explicit ToyPatchEncoder(std::uint64_t seed = 0x5e6c0de);

  [[nodiscard]] std::string id() const override { return "toy-patch"; }
  [[nodiscard]] int stride() const override { return 4; }
  [[nodiscard]] int dim() const override { return 32; }
  [[nodiscard]] FeatureGrid encode(const ImageRGB& img) const override;

 private:
  struct Stage {
    int in_channels;
    int out_channels;
    int kernel;
    int stride;
    Mat weight;  // out x (k * k * in), column = (ky * k + kx) * in + c
    Mat bias;    // 1 x out
    bool activate;
  };
  std::vector<Stage> stages_;
};

/// Looks up a registered encoder; throws EncoderNotFound.
std::shared_ptr<const ImageEncoder> find_encoder(std::string_view encoder_id);

/// Adds an encoder to the process-wide registry (replacing one with the same id).
void register_encoder(std::shared_ptr<const ImageEncoder> encoder);

std::vector<std::string> registered_encoders();

/// Validates `img` (InvalidImage) and runs the named encoder.
FeatureGrid encode_image(const ImageRGB& img, std::string_view encoder_id = "toy-patch");

}  // namespace vplab

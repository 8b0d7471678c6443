#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplab/common/tensor.hpp"

namespace vplab {

struct ImageSize {
  int height = 0;
  int width = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// RGB image, H x W x 3 interleaved, values in [0, 1].
struct ImageRGB {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
  std::string id;

  ImageRGB() = default;
  ImageRGB(int h, int w, std::string image_id = {})
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f), id(std::move(image_id)) {}

  [[nodiscard]] float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  [[nodiscard]] ImageSize size() const { return {height, width}; }

  /// Throws InvalidImage when smaller than 32x32, wrongly sized, or holding
  /// values that are non-finite or outside [0, 1].
  void validate() const;
};

/// h x w grid of d-dimensional patch features, stored as (h*w) x d with
/// row index = row * w + col.
struct FeatureGrid {
  int h = 0;
  int w = 0;
  int stride = 0;
  Mat features;
  std::string source_image_id;

  [[nodiscard]] int dim() const { return static_cast<int>(features.cols()); }
  [[nodiscard]] auto cell(int row, int col) const { return features.row(static_cast<Eigen::Index>(row) * w + col); }
};

enum class Polarity { positive, negative };

struct PointPrompt {
  double x = 0.0;
  double y = 0.0;
  Polarity polarity = Polarity::positive;

  friend bool operator==(const PointPrompt&, const PointPrompt&) = default;
};

/// n x d token matrix.
using TokenSequence = Mat;

/// Shape and width hyperparameters of the two-way mask decoder.
struct DecoderConfig {
  int feature_dim = 32;   ///< encoder output width, projected to d
  int d = 32;
  int depth = 2;
  int heads = 4;
  int d_down = 16;
  int d_mlp = 64;
  int n_mask_tokens = 1;
  int upscale = 4;
  int d_up = 16;          ///< channels of the upscaled embedding read by the mask head

  /// Test-default profile.
  static DecoderConfig tiny();
  /// Widths of SAM's published mask decoder, used for parameter budgets.
  static DecoderConfig sam_scale();

  /// Throws ConfigError if any invariant is violated.
  void validate() const;

  /// Channel count of the upscaled image embedding the mask head reads.
  [[nodiscard]] int upscaled_channels() const;

  friend bool operator==(const DecoderConfig&, const DecoderConfig&) = default;
};

void to_json(nlohmann::json& j, const DecoderConfig& c);
void from_json(const nlohmann::json& j, DecoderConfig& c);

/// Per-slot mask logits at (h * upscale) x (w * upscale), plus predicted IoU.
struct MaskLogits {
  int height = 0;
  int width = 0;
  std::vector<Mat> logits;
  std::vector<double> iou_pred;

  [[nodiscard]] int slots() const { return static_cast<int>(logits.size()); }
  /// Slot with the highest predicted IoU; lowest index wins ties.
  [[nodiscard]] int best_slot() const;
};

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;
  float threshold_used = 0.0f;

  BinaryMask() = default;
  BinaryMask(int h, int w, bool fill = false)
      : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  [[nodiscard]] bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  [[nodiscard]] std::size_t count() const;
  [[nodiscard]] ImageSize size() const { return {height, width}; }

  friend bool operator==(const BinaryMask& a, const BinaryMask& b) {
    return a.height == b.height && a.width == b.width && a.bits == b.bits;
  }
};

/// Nearest-neighbour resample of a mask (pixel-centre sampling).
BinaryMask resize_nearest(const BinaryMask& mask, int height, int width);

/// Bilinear resample with half-pixel centres and edge clamping.
Mat resize_bilinear(const Mat& src, int height, int width);

/// Bilinear resample of an image to a new size.
ImageRGB resize_image(const ImageRGB& img, int height, int width);

}  // namespace vplab

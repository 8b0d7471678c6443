#include "vplab/segcore/prompt_encoder.hpp"

#include <cmath>
#include <numbers>

#include "vplab/common/error.hpp"

namespace vplab {

Mat positional_encoding(double u, double v, int d) {
  if (d % 4 != 0 || d <= 0) throw ShapeError("positional encoding width must be a positive multiple of 4");
  const int nf = d / 4;
  Mat pe(1, d);
  for (int k = 0; k < nf; ++k) {
    const double f = nf == 1 ? 1.0 : 0.5 * std::pow(2.0, 4.0 * k / (nf - 1));
    const double au = 2.0 * std::numbers::pi * f * u;
    const double av = 2.0 * std::numbers::pi * f * v;
    pe(0, 4 * k + 0) = std::sin(au);
    pe(0, 4 * k + 1) = std::cos(au);
    pe(0, 4 * k + 2) = std::sin(av);
    pe(0, 4 * k + 3) = std::cos(av);
  }
  return pe;
}

Mat dense_positional_encoding(int h, int w, int d) {
  Mat pe(static_cast<Eigen::Index>(h) * w, d);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      pe.row(static_cast<Eigen::Index>(i) * w + j) = positional_encoding((j + 0.5) / w, (i + 0.5) / h, d);
    }
  }
  return pe;
}

void validate_points(std::span<const PointPrompt> points, ImageSize img_size) {
  if (points.empty()) throw InvalidPrompt("at least one point prompt is required");
  for (const PointPrompt& p : points) {
    if (!(p.x >= 0.0 && p.x < img_size.width && p.y >= 0.0 && p.y < img_size.height)) {
      throw InvalidPrompt("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside " +
                          std::to_string(img_size.width) + "x" + std::to_string(img_size.height) + " image");
    }
  }
}

TokenSequence encode_points(std::span<const PointPrompt> points, ImageSize img_size, const DecoderWeights& weights) {
  validate_points(points, img_size);
  const int d = weights.config.d;
  const Mat& pos = weights.at("prompt_encoder.pos_embed");
  const Mat& neg = weights.at("prompt_encoder.neg_embed");
  TokenSequence tokens(static_cast<Eigen::Index>(points.size()), d);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const PointPrompt& p = points[i];
    const Mat pe = positional_encoding(p.x / img_size.width, p.y / img_size.height, d);
    tokens.row(static_cast<Eigen::Index>(i)) = pe.row(0) + (p.polarity == Polarity::positive ? pos.row(0) : neg.row(0));
  }
  return tokens;
}

}  // namespace vplab

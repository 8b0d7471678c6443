#include "vplab/segcore/types.hpp"

#include <algorithm>
#include <cmath>

#include "vplab/common/error.hpp"

namespace vplab {

void ImageRGB::validate() const {
  if (height < 32 || width < 32) {
    throw InvalidImage("image must be at least 32x32, got " + std::to_string(height) + "x" + std::to_string(width));
  }
  if (pixels.size() != static_cast<std::size_t>(height) * width * 3) {
    throw InvalidImage("pixel buffer does not match " + std::to_string(height) + "x" + std::to_string(width) + "x3");
  }
  for (float v : pixels) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) throw InvalidImage("pixel values must be finite and in [0,1]");
  }
}

DecoderConfig DecoderConfig::tiny() { return DecoderConfig{}; }

DecoderConfig DecoderConfig::sam_scale() {
  DecoderConfig c;
  c.feature_dim = 32;
  c.d = 256;
  c.depth = 2;
  c.heads = 8;
  c.d_down = 128;
  c.d_mlp = 2048;
  c.n_mask_tokens = 4;
  c.upscale = 4;
  c.d_up = 32;
  return c;
}

void DecoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid DecoderConfig: " + m); };
  if (feature_dim < 1) fail("feature_dim must be positive");
  if (d < 8 || d % 8 != 0) fail("d must be a positive multiple of 8");
  if (heads < 1) fail("heads must be positive");
  if (d % heads != 0) fail("d must be divisible by heads");
  if (d_down < 1 || d_down % heads != 0) fail("d_down must be divisible by heads");
  if (depth < 1) fail("depth must be at least 1");
  if (d_mlp < 1) fail("d_mlp must be positive");
  if (n_mask_tokens < 1) fail("n_mask_tokens must be at least 1");
  if (upscale != 1 && upscale != 2 && upscale != 4 && upscale != 8) fail("upscale must be 1, 2, 4 or 8");
  if (d_up < 1) fail("d_up must be positive");
}

int DecoderConfig::upscaled_channels() const {
  switch (upscale) {
    case 1: return d;
    case 2: return 2 * d_up;
    default: return d_up;
  }
}

void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = nlohmann::json{{"feature_dim", c.feature_dim}, {"d", c.d},           {"depth", c.depth},
                     {"heads", c.heads},             {"d_down", c.d_down}, {"d_mlp", c.d_mlp},
                     {"n_mask_tokens", c.n_mask_tokens}, {"upscale", c.upscale}, {"d_up", c.d_up}};
}

void from_json(const nlohmann::json& j, DecoderConfig& c) {
  j.at("feature_dim").get_to(c.feature_dim);
  j.at("d").get_to(c.d);
  j.at("depth").get_to(c.depth);
  j.at("heads").get_to(c.heads);
  j.at("d_down").get_to(c.d_down);
  j.at("d_mlp").get_to(c.d_mlp);
  j.at("n_mask_tokens").get_to(c.n_mask_tokens);
  j.at("upscale").get_to(c.upscale);
  j.at("d_up").get_to(c.d_up);
}

int MaskLogits::best_slot() const {
  int best = 0;
  for (int i = 1; i < slots(); ++i) {
    if (iou_pred[i] > iou_pred[best]) best = i;
  }
  return best;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

BinaryMask resize_nearest(const BinaryMask& mask, int height, int width) {
  if (mask.height == height && mask.width == width) return mask;
  BinaryMask out(height, width);
  out.threshold_used = mask.threshold_used;
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>((y + 0.5) * mask.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>((x + 0.5) * mask.width / width));
      out.set(y, x, mask.at(sy, sx));
    }
  }
  return out;
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;
};

std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(static_cast<std::size_t>(dst));
  const double ratio = static_cast<double>(src) / dst;
  for (int i = 0; i < dst; ++i) {
    double s = (i + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, src - 1);
    taps[static_cast<std::size_t>(i)] = Tap{lo, hi, s - lo};
  }
  return taps;
}

}  // namespace

Mat resize_bilinear(const Mat& src, int height, int width) {
  if (src.rows() == height && src.cols() == width) return src;
  const auto ty = bilinear_taps(static_cast<int>(src.rows()), height);
  const auto tx = bilinear_taps(static_cast<int>(src.cols()), width);
  Mat out(height, width);
  for (int y = 0; y < height; ++y) {
    const Tap& a = ty[static_cast<std::size_t>(y)];
    for (int x = 0; x < width; ++x) {
      const Tap& b = tx[static_cast<std::size_t>(x)];
      const double top = src(a.lo, b.lo) * (1.0 - b.frac) + src(a.lo, b.hi) * b.frac;
      const double bot = src(a.hi, b.lo) * (1.0 - b.frac) + src(a.hi, b.hi) * b.frac;
      out(y, x) = top * (1.0 - a.frac) + bot * a.frac;
    }
  }
  return out;
}

ImageRGB resize_image(const ImageRGB& img, int height, int width) {
  if (img.height == height && img.width == width) return img;
  ImageRGB out(height, width, img.id);
  for (int c = 0; c < 3; ++c) {
    Mat plane(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) plane(y, x) = img.at(y, x, c);
    const Mat r = resize_bilinear(plane, height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(y, x, c) = static_cast<float>(std::clamp(r(y, x), 0.0, 1.0));
  }
  return out;
}

}  // namespace vplab

#include "vplab/segcore/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "vplab/autograd/tape.hpp"
#include "vplab/common/error.hpp"
#include "vplab/common/rng.hpp"

namespace vplab {
namespace {

// x is (h*w) x c; returns (ho*wo) x (k*k*c) patches for a k x k conv
// (k odd) with edge-replicated padding of k / 2.
Mat im2col(const Mat& x, int h, int w, int c, int k, int stride, int& ho, int& wo) {
  ho = (h + stride - 1) / stride;
  wo = (w + stride - 1) / stride;
  const int pad = k / 2;
  Mat cols(static_cast<Eigen::Index>(ho) * wo, k * k * c);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Eigen::Index r = static_cast<Eigen::Index>(oy) * wo + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = std::clamp(stride * oy - pad + ky, 0, h - 1);
        for (int kx = 0; kx < k; ++kx) {
          const int ix = std::clamp(stride * ox - pad + kx, 0, w - 1);
          cols.row(r).segment((ky * k + kx) * c, c) = x.row(static_cast<Eigen::Index>(iy) * w + ix);
        }
      }
    }
  }
  return cols;
}

struct Registry {
  std::mutex mu;
  std::map<std::string, std::shared_ptr<const ImageEncoder>, std::less<>> encoders;

  Registry() {
    auto toy = std::make_shared<ToyPatchEncoder>();
    encoders.emplace(toy->id(), std::move(toy));
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

ToyPatchEncoder::ToyPatchEncoder(std::uint64_t seed) {
  Rng rng(seed);
  const int channels[4] = {3, 16, 32, 32};
  for (int s = 0; s < 3; ++s) {
    Stage st;
    st.in_channels = channels[s];
    st.out_channels = channels[s + 1];
    st.kernel = s < 2 ? 3 : 1;
    st.stride = s < 2 ? 2 : 1;
    st.activate = s < 2;
    const double fan_in = static_cast<double>(st.kernel * st.kernel * st.in_channels);
    const double gain = st.activate ? 2.0 : 1.0;
    st.weight = rng.normal_matrix(st.out_channels, st.kernel * st.kernel * st.in_channels, std::sqrt(gain / fan_in));
    st.bias = Mat::Zero(1, st.out_channels);
    stages_.push_back(std::move(st));
  }
}

FeatureGrid ToyPatchEncoder::encode(const ImageRGB& img) const {
  if (img.height % stride() != 0 || img.width % stride() != 0) {
    throw InvalidImage("image size must be a multiple of the encoder stride (" + std::to_string(stride()) + ")");
  }
  int h = img.height;
  int w = img.width;
  Mat x(static_cast<Eigen::Index>(h) * w, 3);
  for (int i = 0; i < h * w; ++i) {
    for (int c = 0; c < 3; ++c) x(i, c) = 2.0 * (img.pixels[static_cast<std::size_t>(i) * 3 + c] - 0.5);
  }
  for (const Stage& st : stages_) {
    int ho = 0;
    int wo = 0;
    const Mat cols = im2col(x, h, w, st.in_channels, st.kernel, st.stride, ho, wo);
    Mat y = cols * st.weight.transpose();
    y.rowwise() += st.bias.row(0);
    if (st.activate) y = y.unaryExpr(&ad::gelu_scalar);
    x = std::move(y);
    h = ho;
    w = wo;
  }
  // Remove the per-image mean feature so cosine similarity tracks local content.
  const Mat mean = x.colwise().mean();
  x.rowwise() -= mean.row(0);
  FeatureGrid grid;
  grid.h = h;
  grid.w = w;
  grid.stride = stride();
  grid.features = std::move(x);
  grid.source_image_id = img.id;
  return grid;
}

std::shared_ptr<const ImageEncoder> find_encoder(std::string_view encoder_id) {
  Registry& r = registry();
  std::lock_guard lock(r.mu);
  auto it = r.encoders.find(encoder_id);
  if (it == r.encoders.end()) throw EncoderNotFound("unknown encoder '" + std::string(encoder_id) + "'");
  return it->second;
}

void register_encoder(std::shared_ptr<const ImageEncoder> encoder) {
  Registry& r = registry();
  std::lock_guard lock(r.mu);
  r.encoders[encoder->id()] = std::move(encoder);
}

std::vector<std::string> registered_encoders() {
  Registry& r = registry();
  std::lock_guard lock(r.mu);
  std::vector<std::string> ids;
  for (const auto& [id, _] : r.encoders) ids.push_back(id);
  return ids;
}

FeatureGrid encode_image(const ImageRGB& img, std::string_view encoder_id) {
  const auto enc = find_encoder(encoder_id);
  img.validate();
  return enc->encode(img);
}

}  // namespace vplab

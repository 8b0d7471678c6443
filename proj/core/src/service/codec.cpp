#include "vplab/service/codec.hpp"

#include <charconv>
#include <stdexcept>
#include <vector>

#include <openssl/evp.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vplab/common/error.hpp"

namespace vplab::service {

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (c != '\n' && c != '\r' && c != ' ') clean.push_back(c);
  }
  if (clean.size() % 4 != 0) throw std::invalid_argument("base64 length is not a multiple of 4");
  if (clean.empty()) return {};
  std::string out(clean.size() / 4 * 3, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(clean.data()), static_cast<int>(clean.size()));
  if (n < 0) throw std::invalid_argument("malformed base64");
  std::size_t len = static_cast<std::size_t>(n);
  if (clean.ends_with("==")) {
    len -= 2;
  } else if (clean.ends_with("=")) {
    len -= 1;
  }
  out.resize(len);
  return out;
}

std::string encode_mask_png(const BinaryMask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8U);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) m.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  std::vector<std::uint8_t> buf;
  cv::imencode(".png", m, buf, {cv::IMWRITE_PNG_BILEVEL, 1, cv::IMWRITE_PNG_COMPRESSION, 9});
  return {buf.begin(), buf.end()};
}

BinaryMask decode_mask_png(std::string_view bytes) {
  if (sniff_format(bytes) != ImageFormat::png) throw std::invalid_argument("mask is not a PNG");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8U, const_cast<char*>(bytes.data()));
  const cv::Mat m = cv::imdecode(raw, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::invalid_argument("mask PNG does not decode");
  BinaryMask mask(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) mask.set(y, x, m.at<std::uint8_t>(y, x) != 0);
  return mask;
}

std::string encode_mask_rle(const BinaryMask& mask) {
  std::string out = std::to_string(mask.height) + "x" + std::to_string(mask.width) + ":";
  bool current = false;
  std::size_t run = 0;
  bool first = true;
  for (std::uint8_t b : mask.bits) {
    if ((b != 0) == current) {
      ++run;
      continue;
    }
    out += (first ? "" : ",") + std::to_string(run);
    first = false;
    current = !current;
    run = 1;
  }
  out += (first ? "" : ",") + std::to_string(run);
  return out;
}

BinaryMask decode_mask_rle(std::string_view text) {
  auto fail = [] { return std::invalid_argument("malformed run-length mask"); };
  const auto x = text.find('x');
  const auto colon = text.find(':');
  if (x == std::string_view::npos || colon == std::string_view::npos || x > colon) throw fail();
  auto parse = [&](std::string_view s) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v < 0) throw fail();
    return v;
  };
  const auto h = parse(text.substr(0, x));
  const auto w = parse(text.substr(x + 1, colon - x - 1));
  if (h <= 0 || w <= 0 || h * w > (1LL << 26)) throw fail();
  BinaryMask mask(static_cast<int>(h), static_cast<int>(w));
  std::size_t pos = 0;
  bool value = false;
  std::string_view rest = text.substr(colon + 1);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto run = static_cast<std::size_t>(parse(rest.substr(0, comma)));
    if (pos + run > mask.bits.size()) throw fail();
    std::fill_n(mask.bits.begin() + static_cast<std::ptrdiff_t>(pos), run, value ? 1 : 0);
    pos += run;
    value = !value;
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (pos != mask.bits.size()) throw fail();
  return mask;
}

ImageFormat sniff_format(std::string_view bytes) {
  if (bytes.size() >= 8 && bytes.substr(0, 8) == std::string_view("\x89PNG\r\n\x1a\n", 8)) return ImageFormat::png;
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF && static_cast<unsigned char>(bytes[1]) == 0xD8 &&
      static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return ImageFormat::jpeg;
  }
  return ImageFormat::unknown;
}

ImageRGB decode_image(std::string_view bytes, std::string id) {
  if (sniff_format(bytes) == ImageFormat::unknown) throw std::invalid_argument("unsupported image format");
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8U, const_cast<char*>(bytes.data()));
  const cv::Mat bgr = cv::imdecode(raw, cv::IMREAD_COLOR);
  if (bgr.empty()) throw InvalidImage("image bytes do not decode");
  ImageRGB img(bgr.rows, bgr.cols, std::move(id));
  for (int y = 0; y < bgr.rows; ++y) {
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b& px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<float>(px[2 - c]) / 255.0f;
    }
  }
  return img;
}

std::string encode_image_png(const ImageRGB& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      cv::Vec3b& px = bgr.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) px[2 - c] = cv::saturate_cast<std::uint8_t>(img.at(y, x, c) * 255.0f);
    }
  }
  std::vector<std::uint8_t> buf;
  cv::imencode(".png", bgr, buf);
  return {buf.begin(), buf.end()};
}

}  // namespace vplab::service

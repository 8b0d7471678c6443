#pragma once

#include <string>
#include <string_view>

#include "vplab/segcore/types.hpp"

namespace vplab::service {

std::string base64_encode(std::string_view bytes);
/// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

/// 1-bit greyscale PNG.
std::string encode_mask_png(const BinaryMask& mask);
/// Accepts any PNG; nonzero pixels are set. Throws std::invalid_argument if
/// the bytes do not decode.
BinaryMask decode_mask_png(std::string_view bytes);

/// "<h>x<w>:<r0>,<r1>,..." with runs alternating unset/set, starting unset.
std::string encode_mask_rle(const BinaryMask& mask);
BinaryMask decode_mask_rle(std::string_view text);

enum class ImageFormat { png, jpeg, unknown };
ImageFormat sniff_format(std::string_view bytes);

/// Decodes PNG or JPEG bytes to RGB in [0, 1]. Throws std::invalid_argument
/// for other formats (check sniff_format first) and InvalidImage if decoding fails.
ImageRGB decode_image(std::string_view bytes, std::string id = {});
std::string encode_image_png(const ImageRGB& img);

}  // namespace vplab::service

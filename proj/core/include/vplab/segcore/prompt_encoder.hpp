#pragma once

#include <span>

#include "vplab/segcore/types.hpp"
#include "vplab/segcore/weights.hpp"

namespace vplab {

/// Sinusoidal encoding of a normalized position (u = x / W, v = y / H) into
/// `d` values (d divisible by 4). For frequency k of d/4 geometric steps
/// in [0.5, 8] cycles per image, columns 4k..4k+3 hold
/// sin(2 pi f u), cos(2 pi f u), sin(2 pi f v), cos(2 pi f v).
Mat positional_encoding(double u, double v, int d);

/// One row per grid cell (row-major), encoding the cell centre.
Mat dense_positional_encoding(int h, int w, int d);

/// token_i = positional_encoding(x_i / W, y_i / H) + polarity embedding.
/// Throws InvalidPrompt for an empty list or a point outside the image.
TokenSequence encode_points(std::span<const PointPrompt> points, ImageSize img_size, const DecoderWeights& weights);

void validate_points(std::span<const PointPrompt> points, ImageSize img_size);

}  // namespace vplab

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vplab/segcore/types.hpp"

namespace vplab::trainer {

enum class Origin { synthetic, refined_pseudolabel };

struct LabeledExample {
  ImageRGB image;
  BinaryMask gt_mask;
  Origin origin = Origin::synthetic;
};

/// Procedural dataset request. Families:
///   blobs    rounded reddish lumps on a mucosa-like background
///   ribs     thin bright parallel bands on a dark radiograph-like background
///   cracks   thin dark random walks on speckled concrete
///   patches  irregular rust-textured regions on grey metal
///   shapes   one random geometric object among distractors (base pretraining)
struct DatasetSpec {
  std::string family;
  int n = 20;
  int size = 64;
};

/// The four evaluation families, in report order.
const std::vector<std::string>& evaluation_families();
bool is_known_family(const std::string& family);

/// Deterministic per (spec, seed). Every mask is non-empty and covers less
/// than 60% of the image. Throws SpecError for an unknown family or a size
/// that is not a multiple of 8 in [32, 512].
std::vector<LabeledExample> make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed);

}  // namespace vplab::trainer

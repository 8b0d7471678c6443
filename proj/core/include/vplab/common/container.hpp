#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vplab/common/tensor.hpp"

namespace vplab {

/// Layout shared by the SEGC1 and EPEF1 files:
///
///   magic        5 ASCII bytes
///   header_len   uint32 little-endian
///   header       header_len bytes of compact JSON (sorted keys); always
///                carries "dtype": "f32le" and "arrays": [{name, shape}]
///   payload      each array as row-major little-endian float32, in the
///                order listed by "arrays"
struct NamedArray {
  std::string name;
  Mat value;
};

std::string write_container(std::string_view magic, nlohmann::json header,
                            const std::vector<std::pair<std::string, const Mat*>>& arrays);

struct ParsedContainer {
  nlohmann::json header;
  std::vector<NamedArray> arrays;
};

/// Throws CorruptCheckpoint on bad magic, truncation, or a malformed header.
ParsedContainer read_container(std::string_view magic, std::string_view bytes);

/// Rounds every entry to float32, as a container round trip would.
Mat round_to_f32(const Mat& m);

}  // namespace vplab

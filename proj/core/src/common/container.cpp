#include "vplab/common/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "vplab/common/error.hpp"

namespace vplab {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

}  // namespace

Mat round_to_f32(const Mat& m) { return m.cast<float>().cast<double>(); }

std::string write_container(std::string_view magic, nlohmann::json header,
                            const std::vector<std::pair<std::string, const Mat*>>& arrays) {
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t payload_floats = 0;
  for (const auto& [name, m] : arrays) {
    manifest.push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}});
    payload_floats += static_cast<std::size_t>(m->size());
  }
  header["arrays"] = std::move(manifest);
  header["dtype"] = "f32le";
  const std::string text = header.dump();

  std::string out;
  out.reserve(magic.size() + 4 + text.size() + 4 * payload_floats);
  out.append(magic);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.append(text);
  for (const auto& [name, m] : arrays) {
    for (Eigen::Index i = 0; i < m->size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m->data()[i])));
    }
  }
  return out;
}

ParsedContainer read_container(std::string_view magic, std::string_view bytes) {
  if (bytes.size() < magic.size() + 4 || bytes.substr(0, magic.size()) != magic) {
    throw CorruptCheckpoint("missing " + std::string(magic) + " magic");
  }
  const std::size_t header_len = get_u32(bytes, magic.size());
  const std::size_t header_at = magic.size() + 4;
  if (bytes.size() < header_at + header_len) throw CorruptCheckpoint("truncated header");

  ParsedContainer parsed;
  try {
    parsed.header = nlohmann::json::parse(bytes.substr(header_at, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed header: ") + e.what());
  }
  if (parsed.header.value("dtype", "") != "f32le" || !parsed.header.contains("arrays")) {
    throw CorruptCheckpoint("header lacks dtype/arrays");
  }

  std::size_t at = header_at + header_len;
  try {
    for (const auto& entry : parsed.header.at("arrays")) {
      NamedArray a;
      a.name = entry.at("name").get<std::string>();
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      if (rows < 0 || cols < 0) throw CorruptCheckpoint("negative shape for " + a.name);
      const auto n = static_cast<std::size_t>(rows * cols);
      if (bytes.size() < at + 4 * n) throw CorruptCheckpoint("truncated payload at " + a.name);
      a.value.resize(rows, cols);
      for (std::size_t i = 0; i < n; ++i) {
        a.value.data()[i] = std::bit_cast<float>(get_u32(bytes, at + 4 * i));
      }
      at += 4 * n;
      parsed.arrays.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed manifest: ") + e.what());
  }
  if (at != bytes.size()) throw CorruptCheckpoint("trailing bytes after payload");
  return parsed;
}

}  // namespace vplab

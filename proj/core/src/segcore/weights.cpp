#include "vplab/segcore/weights.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "vplab/common/container.hpp"
#include "vplab/common/error.hpp"
#include "vplab/common/hash.hpp"
#include "vplab/common/rng.hpp"

namespace vplab {
namespace {

constexpr std::string_view kMagic = "SEGC1";

void add_attention(std::vector<LinearLayerInfo>& out, const std::string& prefix, int d, int inner) {
  out.push_back({prefix + ".q_proj", d, inner});
  out.push_back({prefix + ".k_proj", d, inner});
  out.push_back({prefix + ".v_proj", d, inner});
  out.push_back({prefix + ".out_proj", inner, d});
}

std::vector<std::string> norm_paths(const DecoderConfig& cfg) {
  std::vector<std::string> norms;
  for (int b = 0; b < cfg.depth; ++b) {
    for (int k = 1; k <= 4; ++k) norms.push_back("blocks." + std::to_string(b) + ".norm" + std::to_string(k));
  }
  norms.push_back("final_norm");
  return norms;
}

}  // namespace

std::vector<LinearLayerInfo> linear_layers(const DecoderConfig& cfg) {
  std::vector<LinearLayerInfo> out;
  out.push_back({"input_proj", cfg.feature_dim, cfg.d});
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b);
    add_attention(out, p + ".self_attn", cfg.d, cfg.d);
    add_attention(out, p + ".cross_t2i", cfg.d, cfg.d_down);
    out.push_back({p + ".mlp.lin1", cfg.d, cfg.d_mlp});
    out.push_back({p + ".mlp.lin2", cfg.d_mlp, cfg.d});
    add_attention(out, p + ".cross_i2t", cfg.d, cfg.d_down);
  }
  add_attention(out, "final_attn", cfg.d, cfg.d_down);
  int c = cfg.d;
  int stage = 0;
  for (int up = cfg.upscale; up > 1; up /= 2, ++stage) {
    const int next = stage == 0 ? 2 * cfg.d_up : cfg.d_up;
    out.push_back({"upscale." + std::to_string(stage), c, 4 * next});
    c = next;
  }
  const int hyper_out = cfg.upscaled_channels();
  for (int s = 0; s < cfg.n_mask_tokens; ++s) {
    const std::string p = "hyper." + std::to_string(s);
    out.push_back({p + ".0", cfg.d, cfg.d});
    out.push_back({p + ".1", cfg.d, cfg.d});
    out.push_back({p + ".2", cfg.d, hyper_out});
  }
  out.push_back({"iou_head.0", cfg.d, cfg.d});
  out.push_back({"iou_head.1", cfg.d, cfg.d});
  out.push_back({"iou_head.2", cfg.d, cfg.n_mask_tokens});
  return out;
}

std::vector<std::pair<std::string, std::pair<int, int>>> parameter_shapes(const DecoderConfig& cfg) {
  std::vector<std::pair<std::string, std::pair<int, int>>> shapes;
  shapes.push_back({"output_tokens", {1 + cfg.n_mask_tokens, cfg.d}});
  shapes.push_back({"prompt_encoder.pos_embed", {1, cfg.d}});
  shapes.push_back({"prompt_encoder.neg_embed", {1, cfg.d}});
  for (const auto& l : linear_layers(cfg)) {
    shapes.push_back({l.path + ".weight", {l.out, l.in}});
    shapes.push_back({l.path + ".bias", {1, l.out}});
  }
  for (const auto& n : norm_paths(cfg)) {
    shapes.push_back({n + ".gamma", {1, cfg.d}});
    shapes.push_back({n + ".beta", {1, cfg.d}});
  }
  if (cfg.upscale >= 2) {
    shapes.push_back({"upscale_norm.gamma", {1, 2 * cfg.d_up}});
    shapes.push_back({"upscale_norm.beta", {1, 2 * cfg.d_up}});
  }
  return shapes;
}

DecoderWeights DecoderWeights::initialize(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DecoderWeights w;
  w.config = cfg;
  Rng rng(seed);
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    const auto [rows, cols] = shape;
    Mat m;
    const auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".weight")) {
      m = rng.normal_matrix(rows, cols, 1.0 / std::sqrt(static_cast<double>(cols)));
    } else if (ends_with(".gamma")) {
      m = Mat::Ones(rows, cols);
    } else if (ends_with(".bias") || ends_with(".beta")) {
      m = Mat::Zero(rows, cols);
    } else {
      m = rng.normal_matrix(rows, cols, 1.0);
    }
    w.arrays.emplace(name, round_to_f32(m));
  }
  return w;
}

const Mat& DecoderWeights::at(std::string_view name) const {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ConfigError("decoder has no array '" + std::string(name) + "'");
  return it->second;
}

Mat& DecoderWeights::at(std::string_view name) {
  auto it = arrays.find(name);
  if (it == arrays.end()) throw ConfigError("decoder has no array '" + std::string(name) + "'");
  return it->second;
}

std::size_t DecoderWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, m] : arrays) n += static_cast<std::size_t>(m.size());
  return n;
}

std::string save_weights(const DecoderWeights& w) {
  nlohmann::json header;
  header["format"] = "SEGC1";
  header["config"] = w.config;
  header["encoder_id"] = w.encoder_id;
  header["merged_lora"] = w.merged_lora;
  std::vector<std::pair<std::string, const Mat*>> arrays;
  for (const auto& [name, shape] : parameter_shapes(w.config)) arrays.emplace_back(name, &w.at(name));
  return write_container(kMagic, std::move(header), arrays);
}

DecoderWeights load_weights(std::string_view bytes) {
  ParsedContainer parsed = read_container(kMagic, bytes);
  DecoderWeights w;
  try {
    w.config = parsed.header.at("config").get<DecoderConfig>();
    w.encoder_id = parsed.header.at("encoder_id").get<std::string>();
    w.merged_lora = parsed.header.value("merged_lora", "");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("SEGC1 header: ") + e.what());
  }
  try {
    w.config.validate();
  } catch (const ConfigError& e) {
    throw CorruptCheckpoint(e.what());
  }
  const auto expected = parameter_shapes(w.config);
  if (expected.size() != parsed.arrays.size()) throw CorruptCheckpoint("SEGC1 array count does not match config");
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& [name, shape] = expected[i];
    NamedArray& a = parsed.arrays[i];
    if (a.name != name || a.value.rows() != shape.first || a.value.cols() != shape.second) {
      throw CorruptCheckpoint("SEGC1 array '" + a.name + "' does not match expected '" + name + "'");
    }
    w.arrays.emplace(name, std::move(a.value));
  }
  return w;
}

void save_weights_file(const DecoderWeights& w, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  const std::string bytes = save_weights(w);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DecoderWeights load_weights_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_weights(ss.str());
}

std::string weights_hash(const DecoderWeights& w) { return sha256_hex(save_weights(w)); }

}  // namespace vplab

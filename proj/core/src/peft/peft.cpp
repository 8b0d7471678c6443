#include "vplab/peft/peft.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "vplab/autograd/tape.hpp"
#include "vplab/common/container.hpp"
#include "vplab/common/error.hpp"
#include "vplab/common/rng.hpp"

namespace vplab::peft {
namespace {

constexpr std::string_view kMagic = "EPEF1";

bool glob_match(const std::string& pattern, const std::string& path) {
  return fnmatch(pattern.c_str(), path.c_str(), 0) == 0;
}

std::string available_paths(const DecoderConfig& decoder) {
  std::string out;
  for (const auto& l : linear_layers(decoder)) {
    if (!out.empty()) out += ", ";
    out += l.path;
  }
  return out;
}

std::vector<int> ia3_units(const EPEFTConfig& cfg, const DecoderConfig& decoder) {
  std::vector<int> units = cfg.ia3_blocks;
  if (units.empty()) {
    for (int u = 0; u <= decoder.depth; ++u) units.push_back(u);
  }
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());
  for (int u : units) {
    if (u < 0 || u > decoder.depth) {
      throw TargetResolutionError("IA3 unit " + std::to_string(u) + " does not exist; valid units are 0.." +
                                  std::to_string(decoder.depth) + " (last = final attention)");
    }
  }
  return units;
}

int adapter_bottleneck(const EPEFTConfig& cfg, const DecoderConfig& decoder) {
  const int b = cfg.adapter_bottleneck > 0 ? cfg.adapter_bottleneck : decoder.d / 8;
  if (b < 1 || b >= decoder.d) {
    throw ConfigError("adapter bottleneck must be in [1, d), got " + std::to_string(b));
  }
  return b;
}

}  // namespace

std::vector<std::string> resolve_targets(const std::vector<std::string>& patterns, const DecoderConfig& decoder) {
  const auto layers = linear_layers(decoder);
  std::vector<std::string> resolved;
  for (const auto& pattern : patterns) {
    bool any = false;
    for (const auto& l : layers) {
      if (glob_match(pattern, l.path)) {
        any = true;
        if (std::find(resolved.begin(), resolved.end(), l.path) == resolved.end()) resolved.push_back(l.path);
      }
    }
    if (!any) {
      throw TargetResolutionError("LoRA target '" + pattern + "' matches no layer; available: " +
                                  available_paths(decoder));
    }
  }
  // Keep forward order regardless of pattern order.
  std::vector<std::string> ordered;
  for (const auto& l : layers) {
    if (std::find(resolved.begin(), resolved.end(), l.path) != resolved.end()) ordered.push_back(l.path);
  }
  return ordered;
}

EPEFTState attach(const EPEFTConfig& cfg, const DecoderConfig& decoder) {
  cfg.validate();
  decoder.validate();
  EPEFTState s;
  s.config = cfg;
  s.decoder = decoder;
  s.config_fingerprint = cfg.fingerprint();
  const int d = decoder.d;

  if (cfg.use_lora) {
    Rng rng(mix_seed(cfg.seed, 1));
    std::map<std::string, LinearLayerInfo> by_path;
    for (const auto& l : linear_layers(decoder)) by_path.emplace(l.path, l);
    for (const auto& path : resolve_targets(cfg.lora_targets, decoder)) {
      const LinearLayerInfo& l = by_path.at(path);
      LoRABranch br;
      br.target_layer = path;
      br.rank = cfg.lora_rank;
      br.alpha = cfg.lora_alpha;
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
      br.A = round_to_f32(rng.uniform_matrix(cfg.lora_rank, l.in, -bound, bound));
      br.B = Mat::Zero(l.out, cfg.lora_rank);
      s.lora.push_back(std::move(br));
    }
  }

  if (cfg.use_ia3) {
    for (int u : ia3_units(cfg, decoder)) {
      IA3Branch br;
      br.target_block = u;
      if (u < decoder.depth) {
        const std::string p = "blocks." + std::to_string(u);
        br.attentions.push_back({p + ".self_attn", Mat::Ones(1, d), Mat::Ones(1, d)});
        br.attentions.push_back({p + ".cross_t2i", Mat::Ones(1, decoder.d_down), Mat::Ones(1, decoder.d_down)});
        br.attentions.push_back({p + ".cross_i2t", Mat::Ones(1, decoder.d_down), Mat::Ones(1, decoder.d_down)});
        br.l_ff = Mat::Ones(1, decoder.d_mlp);
      } else {
        br.attentions.push_back({"final_attn", Mat::Ones(1, decoder.d_down), Mat::Ones(1, decoder.d_down)});
      }
      s.ia3.push_back(std::move(br));
    }
  }

  if (cfg.use_prompts) {
    Rng rng(mix_seed(cfg.seed, 2));
    s.prompts.m_tok = cfg.m_tok;
    s.prompts.m_img = cfg.m_img;
    s.prompts.tokens_tok = round_to_f32(rng.normal_matrix(cfg.m_tok, d, 1.0));
    s.prompts.tokens_img = round_to_f32(rng.normal_matrix(cfg.m_img, d, 1.0));
    s.prompts.gate_tok = Mat::Zero(1, 1);
    s.prompts.gate_img = Mat::Zero(1, 1);
  }

  if (cfg.use_adapter) {
    Rng rng(mix_seed(cfg.seed, 3));
    const int b = adapter_bottleneck(cfg, decoder);
    for (int blk = 0; blk < decoder.depth; ++blk) {
      AdapterBlock a;
      a.block = blk;
      a.bottleneck = b;
      a.W_down = round_to_f32(rng.normal_matrix(b, d, 1.0 / std::sqrt(static_cast<double>(d))));
      a.b_down = Mat::Zero(1, b);
      a.W_up = Mat::Zero(d, b);
      a.b_up = Mat::Zero(1, d);
      s.adapter.blocks.push_back(std::move(a));
    }
    if (cfg.use_prompts) {
      CondMlp c;
      c.fc1_weight = round_to_f32(rng.normal_matrix(d, d, 1.0 / std::sqrt(static_cast<double>(d))));
      c.fc1_bias = Mat::Zero(1, d);
      c.fc2_weight = Mat::Zero(d, d);
      c.fc2_bias = Mat::Zero(1, d);
      s.adapter.cond_mlp = std::move(c);
    }
  }
  return s;
}

EPEFTState attach(const EPEFTConfig& cfg, const DecoderWeights& weights) {
  if (weights.lora_merged()) throw MergeStateError("cannot attach to weights with merged LoRA deltas");
  return attach(cfg, weights.config);
}

Vec lora_forward(const Vec& x, const Mat& W, const LoRABranch& branch) {
  if (W.cols() != x.size() || branch.A.cols() != x.size() || branch.B.rows() != W.rows() ||
      branch.A.rows() != branch.rank || branch.B.cols() != branch.rank) {
    throw ShapeError("lora_forward: shapes disagree");
  }
  return W * x + branch.scaling() * (branch.B * (branch.A * x));
}

IA3Scaled ia3_forward(const Vec& keys, const Vec& values, const Vec& ff_inner, const Mat& l_k, const Mat& l_v,
                      const Mat& l_ff) {
  if (keys.size() != l_k.size() || values.size() != l_v.size() || ff_inner.size() != l_ff.size()) {
    throw ShapeError("ia3_forward: vector lengths disagree");
  }
  IA3Scaled out;
  out.keys = keys.cwiseProduct(l_k.reshaped());
  out.values = values.cwiseProduct(l_v.reshaped());
  out.ff_inner = ff_inner.cwiseProduct(l_ff.reshaped());
  return out;
}

IA3Scaled ia3_forward(const Vec& keys, const Vec& values, const Vec& ff_inner, const IA3Attention& attn,
                      const IA3Branch& branch) {
  return ia3_forward(keys, values, ff_inner, attn.l_k, attn.l_v, branch.l_ff);
}

Vec adapter_forward(const Vec& x, const AdapterBlock& blk) {
  if (blk.W_down.cols() != x.size() || blk.W_up.rows() != x.size() || blk.W_up.cols() != blk.W_down.rows() ||
      blk.b_down.size() != blk.W_down.rows() || blk.b_up.size() != x.size()) {
    throw ShapeError("adapter_forward: shapes disagree");
  }
  const Vec hidden = (blk.W_down * x + blk.b_down.reshaped()).unaryExpr(&ad::gelu_scalar);
  return x + blk.W_up * hidden + blk.b_up.reshaped();
}

InjectedSequences inject_prompts(const Mat& token_seq, const Mat& image_seq, const PromptBank& bank,
                                 const Vec& mean_image_feature, const AdapterSet& adapter) {
  const Eigen::Index d = token_seq.cols();
  if (image_seq.cols() != d || (bank.m_tok > 0 && bank.tokens_tok.cols() != d) ||
      (bank.m_img > 0 && bank.tokens_img.cols() != d)) {
    throw ShapeError("inject_prompts: sequence widths disagree");
  }
  InjectedSequences out;
  out.strip.token_prefix = bank.m_tok;
  out.strip.image_prefix = bank.m_img;
  if (bank.m_tok == 0 && bank.m_img == 0) {
    out.tokens = token_seq;
    out.image = image_seq;
    return out;
  }
  if (mean_image_feature.size() != d) throw ShapeError("inject_prompts: mean feature width disagrees");

  Mat cond = Mat::Zero(1, d);
  if (adapter.cond_mlp) {
    const CondMlp& c = *adapter.cond_mlp;
    Mat hidden = mean_image_feature.transpose() * c.fc1_weight.transpose() + c.fc1_bias;
    hidden = hidden.unaryExpr(&ad::gelu_scalar);
    cond = hidden * c.fc2_weight.transpose() + c.fc2_bias;
  }
  out.tokens.resize(bank.m_tok + token_seq.rows(), d);
  out.image.resize(bank.m_img + image_seq.rows(), d);
  if (bank.m_tok > 0) {
    out.tokens.topRows(bank.m_tok) = bank.tokens_tok;
    out.tokens.topRows(bank.m_tok).rowwise() += cond.row(0);
  }
  out.tokens.bottomRows(token_seq.rows()) = token_seq;
  if (bank.m_img > 0) {
    out.image.topRows(bank.m_img) = bank.tokens_img;
    out.image.topRows(bank.m_img).rowwise() += cond.row(0);
  }
  out.image.bottomRows(image_seq.rows()) = image_seq;
  for (int i = 0; i < bank.m_tok; ++i) out.strip.token_positions.push_back(i);
  for (int i = 0; i < bank.m_img; ++i) out.strip.image_positions.push_back(i);
  return out;
}

TrainableCounts count_trainable(const EPEFTState& state) {
  const DecoderConfig& dec = state.decoder;
  const long long d = dec.d;
  TrainableCounts c;
  std::map<std::string, LinearLayerInfo> by_path;
  for (const auto& l : linear_layers(dec)) by_path.emplace(l.path, l);
  for (const auto& br : state.lora) {
    const LinearLayerInfo& l = by_path.at(br.target_layer);
    c.lora += static_cast<long long>(br.rank) * (l.in + l.out);
  }
  for (const auto& br : state.ia3) {
    if (br.target_block < dec.depth) {
      c.ia3 += 2 * d + 4LL * dec.d_down + dec.d_mlp;
    } else {
      c.ia3 += 2LL * dec.d_down;
    }
  }
  if (state.config.use_prompts) {
    c.prompts = static_cast<long long>(state.prompts.m_tok + state.prompts.m_img) * d + 2;
  }
  for (const auto& blk : state.adapter.blocks) {
    const long long b = blk.bottleneck;
    c.adapter += 2 * d * b + b + d;
  }
  if (state.adapter.cond_mlp) c.cond_mlp = 2 * (d * d + d);
  return c;
}

DecoderWeights merge_lora(const EPEFTState& state, const DecoderWeights& weights) {
  if (weights.lora_merged()) throw MergeStateError("weights already carry merged LoRA deltas");
  if (!(state.decoder == weights.config)) throw ConfigMismatch("state was attached to a different decoder");
  DecoderWeights merged = weights;
  for (const auto& br : state.lora) {
    merged.at(br.target_layer + ".weight") += br.scaling() * (br.B * br.A);
  }
  merged.merged_lora = state.config_fingerprint;
  return merged;
}

DecoderWeights unmerge_lora(const EPEFTState& state, const DecoderWeights& merged) {
  if (!merged.lora_merged()) throw MergeStateError("weights carry no merged LoRA deltas");
  if (merged.merged_lora != state.config_fingerprint) {
    throw MergeStateError("weights were merged with a different EPEFT state");
  }
  DecoderWeights base = merged;
  for (const auto& br : state.lora) {
    base.at(br.target_layer + ".weight") -= br.scaling() * (br.B * br.A);
  }
  base.merged_lora.clear();
  return base;
}

std::string save_delta(const EPEFTState& state) {
  nlohmann::json header;
  header["format"] = "EPEF1";
  header["config"] = state.config;
  header["decoder"] = state.decoder;
  header["fingerprint"] = state.config_fingerprint;
  std::vector<std::pair<std::string, const Mat*>> arrays;
  state.visit([&](const std::string& name, const Mat& m) { arrays.emplace_back(name, &m); });
  return write_container(kMagic, std::move(header), arrays);
}

EPEFTState load_delta(std::string_view bytes, const DecoderConfig& decoder) {
  ParsedContainer parsed = read_container(kMagic, bytes);
  DecoderConfig stored_decoder;
  EPEFTConfig cfg;
  std::string fingerprint;
  try {
    stored_decoder = parsed.header.at("decoder").get<DecoderConfig>();
    cfg = parsed.header.at("config").get<EPEFTConfig>();
    fingerprint = parsed.header.at("fingerprint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("EPEF1 header: ") + e.what());
  }
  if (!(stored_decoder == decoder)) {
    throw ConfigMismatch("checkpoint was written for a different decoder configuration");
  }
  if (fingerprint != cfg.fingerprint()) {
    throw ConfigMismatch("checkpoint fingerprint " + fingerprint + " does not match its config (" +
                         cfg.fingerprint() + ")");
  }
  EPEFTState state = attach(cfg, decoder);
  std::size_t i = 0;
  state.visit([&](const std::string& name, Mat& m) {
    if (i >= parsed.arrays.size()) throw CorruptCheckpoint("checkpoint lacks array '" + name + "'");
    NamedArray& a = parsed.arrays[i++];
    if (a.name != name || a.value.rows() != m.rows() || a.value.cols() != m.cols()) {
      throw CorruptCheckpoint("checkpoint array '" + a.name + "' does not match expected '" + name + "'");
    }
    m = std::move(a.value);
  });
  if (i != parsed.arrays.size()) throw CorruptCheckpoint("checkpoint has unexpected extra arrays");
  return state;
}

void randomize(EPEFTState& state, std::uint64_t seed, double scale) {
  Rng rng(seed);
  state.visit([&](const std::string& name, Mat& m) {
    const bool multiplicative = name.starts_with("ia3.");
    Mat noise = rng.normal_matrix(m.rows(), m.cols(), scale);
    m = multiplicative ? Mat((Mat::Ones(m.rows(), m.cols()) + noise)) : noise;
  });
}

}  // namespace vplab::peft

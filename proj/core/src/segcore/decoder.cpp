#include "vplab/segcore/decoder.hpp"

#include <cmath>

#include "vplab/common/error.hpp"
#include "vplab/segcore/prompt_encoder.hpp"

namespace vplab {

using ad::Var;

DecoderGraph::DecoderGraph(ad::Tape& tape, const DecoderWeights& weights, const peft::EPEFTState* peft,
                           GraphOptions opts)
    : tape_(tape), weights_(weights), peft_(peft), opts_(opts) {
  if (peft_ != nullptr && !(peft_->decoder == weights_.config)) {
    throw ConfigMismatch("EPEFT state was attached to a different decoder configuration");
  }
}

Var DecoderGraph::base(const std::string& name) {
  auto it = base_vars_.find(name);
  if (it != base_vars_.end()) return it->second;
  Var v = tape_.parameter(weights_.at(name), opts_.train_base);
  base_vars_.emplace(name, v);
  return v;
}

Var DecoderGraph::delta(const std::string& name, const Mat& value) {
  auto it = peft_vars_.find(name);
  if (it != peft_vars_.end()) return it->second;
  Var v = tape_.parameter(value, opts_.train_peft);
  peft_vars_.emplace(name, v);
  return v;
}

Var DecoderGraph::linear(const std::string& path, Var x) {
  Var y = ad::linear(x, base(path + ".weight"), base(path + ".bias"));
  if (peft_ == nullptr || weights_.lora_merged()) return y;
  if (const peft::LoRABranch* br = peft_->find_lora(path)) {
    Var a = delta(peft::lora_name(path, "A"), br->A);
    Var b = delta(peft::lora_name(path, "B"), br->B);
    y = ad::add(y, ad::scale(ad::linear(ad::linear(x, a), b), br->scaling()));
  }
  return y;
}

Var DecoderGraph::norm(const std::string& prefix, Var x) {
  return ad::layer_norm_rows(x, base(prefix + ".gamma"), base(prefix + ".beta"));
}

Var DecoderGraph::mlp3(const std::string& prefix, Var x) {
  Var h = ad::gelu(linear(prefix + ".0", x));
  h = ad::gelu(linear(prefix + ".1", h));
  return linear(prefix + ".2", h);
}

Var DecoderGraph::attention(const std::string& prefix, Var q_in, Var k_in, Var v_in, Eigen::Index key_memory,
                            Var gate, int ia3_unit) {
  Var q = linear(prefix + ".q_proj", q_in);
  Var k = linear(prefix + ".k_proj", k_in);
  Var v = linear(prefix + ".v_proj", v_in);
  if (peft_ != nullptr && ia3_unit >= 0) {
    if (const peft::IA3Attention* ia = peft_->find_ia3_attention(ia3_unit, prefix)) {
      k = ad::mul_row(k, delta(peft::ia3_name(ia3_unit, prefix, "l_k"), ia->l_k));
      v = ad::mul_row(v, delta(peft::ia3_name(ia3_unit, prefix, "l_v"), ia->l_v));
    }
  }
  const int heads = weights_.config.heads;
  const Eigen::Index inner = q.cols();
  const Eigen::Index dh = inner / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index real_keys = k.rows() - key_memory;

  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Var qh = heads == 1 ? q : ad::slice_cols(q, hd * dh, dh);
    Var kh = heads == 1 ? k : ad::slice_cols(k, hd * dh, dh);
    Var vh = heads == 1 ? v : ad::slice_cols(v, hd * dh, dh);
    Var kr = key_memory > 0 ? ad::slice_rows(kh, key_memory, real_keys) : kh;
    Var vr = key_memory > 0 ? ad::slice_rows(vh, key_memory, real_keys) : vh;
    Var out = ad::matmul(ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kr), inv_sqrt)), vr);
    if (key_memory > 0) {
      Var km = ad::slice_rows(kh, 0, key_memory);
      Var vm = ad::slice_rows(vh, 0, key_memory);
      Var mem = ad::matmul(ad::softmax_rows(ad::scale(ad::matmul_nt(qh, km), inv_sqrt)), vm);
      out = ad::add(out, ad::scale_by(mem, gate));
    }
    outs.push_back(out);
  }
  Var cat = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return linear(prefix + ".out_proj", cat);
}

Var DecoderGraph::adapter(int block, Var x) {
  if (peft_ == nullptr) return x;
  const peft::AdapterBlock* blk = peft_->find_adapter(block);
  if (blk == nullptr) return x;
  Var wd = delta(peft::adapter_name(block, "W_down"), blk->W_down);
  Var bd = delta(peft::adapter_name(block, "b_down"), blk->b_down);
  Var wu = delta(peft::adapter_name(block, "W_up"), blk->W_up);
  Var bu = delta(peft::adapter_name(block, "b_up"), blk->b_up);
  Var hidden = ad::gelu(ad::linear(x, wd, bd));
  return ad::add(x, ad::linear(hidden, wu, bu));
}

Var DecoderGraph::prompt_tokens(std::span<const PointPrompt> points, ImageSize img_size) {
  validate_points(points, img_size);
  const int d = weights_.config.d;
  Var pos = base("prompt_encoder.pos_embed");
  Var neg = base("prompt_encoder.neg_embed");
  std::vector<Var> rows;
  rows.reserve(points.size());
  for (const PointPrompt& p : points) {
    Var pe = tape_.constant(positional_encoding(p.x / img_size.width, p.y / img_size.height, d));
    rows.push_back(ad::add(pe, p.polarity == Polarity::positive ? pos : neg));
  }
  return ad::concat_rows(rows);
}

namespace {

void check_finite(const Var& v, int layer, const char* what) {
  if (!v.value().allFinite()) throw NumericalError(layer, what);
}

}  // namespace

DecoderGraph::Output DecoderGraph::forward(Var image_features, Var prompts, int h, int w) {
  const DecoderConfig& cfg = weights_.config;
  if (image_features.cols() != cfg.feature_dim) {
    throw ShapeError("feature width " + std::to_string(image_features.cols()) + " != decoder feature_dim " +
                     std::to_string(cfg.feature_dim));
  }
  if (image_features.rows() != static_cast<Eigen::Index>(h) * w) throw ShapeError("feature rows != h*w");
  if (prompts.valid() && prompts.rows() > 0 && prompts.cols() != cfg.d) {
    throw ShapeError("prompt width " + std::to_string(prompts.cols()) + " != decoder d " + std::to_string(cfg.d));
  }

  Var img = linear("input_proj", image_features);
  Var img_pe = tape_.constant(dense_positional_encoding(h, w, cfg.d));
  Var tok = base("output_tokens");
  if (prompts.valid() && prompts.rows() > 0) tok = ad::concat_rows({tok, prompts});
  Var tok_pe = tok;

  Eigen::Index m_tok = 0;
  Eigen::Index m_img = 0;
  Var gate_tok;
  Var gate_img;
  if (peft_ != nullptr && peft_->config.use_prompts) {
    const peft::PromptBank& bank = peft_->prompts;
    m_tok = bank.m_tok;
    m_img = bank.m_img;
    gate_tok = delta("prompts.gate_tok", bank.gate_tok);
    gate_img = delta("prompts.gate_img", bank.gate_img);
    Var cond;
    if (peft_->adapter.cond_mlp && (m_tok > 0 || m_img > 0)) {
      const peft::CondMlp& c = *peft_->adapter.cond_mlp;
      Var mean = ad::mean_rows(img);
      Var hidden = ad::gelu(ad::linear(mean, delta("cond_mlp.fc1.weight", c.fc1_weight),
                                       delta("cond_mlp.fc1.bias", c.fc1_bias)));
      cond = ad::linear(hidden, delta("cond_mlp.fc2.weight", c.fc2_weight), delta("cond_mlp.fc2.bias", c.fc2_bias));
    }
    auto memory = [&](const char* name, const Mat& tokens) {
      Var mem = delta(name, tokens);
      return cond.valid() ? ad::add_row(mem, cond) : mem;
    };
    if (m_tok > 0) {
      tok = ad::concat_rows({memory("prompts.tokens_tok", bank.tokens_tok), tok});
      tok_pe = ad::concat_rows({tape_.constant(Mat::Zero(m_tok, cfg.d)), tok_pe});
    }
    if (m_img > 0) {
      img = ad::concat_rows({memory("prompts.tokens_img", bank.tokens_img), img});
      img_pe = ad::concat_rows({tape_.constant(Mat::Zero(m_img, cfg.d)), img_pe});
    }
  }

  for (int b = 0; b < cfg.depth; ++b) {
    const std::string p = "blocks." + std::to_string(b);

    Var q = ad::add(tok, tok_pe);
    Var a = attention(p + ".self_attn", q, q, tok, m_tok, gate_tok, b);
    tok = norm(p + ".norm1", ad::add(tok, a));

    q = ad::add(tok, tok_pe);
    Var k = ad::add(img, img_pe);
    a = attention(p + ".cross_t2i", q, k, img, m_img, gate_img, b);
    tok = norm(p + ".norm2", ad::add(tok, a));

    Var hidden = ad::gelu(linear(p + ".mlp.lin1", tok));
    if (peft_ != nullptr) {
      if (const peft::IA3Branch* br = peft_->find_ia3(b); br != nullptr && br->l_ff.size() > 0) {
        hidden = ad::mul_row(hidden, delta(peft::ia3_ff_name(b), br->l_ff));
      }
    }
    tok = norm(p + ".norm3", ad::add(tok, linear(p + ".mlp.lin2", hidden)));
    tok = adapter(b, tok);

    q = ad::add(tok, tok_pe);
    k = ad::add(img, img_pe);
    a = attention(p + ".cross_i2t", k, q, tok, m_tok, gate_tok, b);
    img = norm(p + ".norm4", ad::add(img, a));

    check_finite(tok, b, "token stream");
    check_finite(img, b, "image stream");
  }

  {
    Var q = ad::add(tok, tok_pe);
    Var k = ad::add(img, img_pe);
    Var a = attention("final_attn", q, k, img, m_img, gate_img, cfg.depth);
    tok = norm("final_norm", ad::add(tok, a));
    check_finite(tok, cfg.depth, "final attention");
  }

  if (m_tok > 0) tok = ad::slice_rows(tok, m_tok, tok.rows() - m_tok);
  if (m_img > 0) img = ad::slice_rows(img, m_img, img.rows() - m_img);

  Var emb = img;
  int eh = h;
  int ew = w;
  int stage = 0;
  for (int up = cfg.upscale; up > 1; up /= 2, ++stage) {
    emb = ad::pixel_shuffle2(linear("upscale." + std::to_string(stage), emb), eh, ew);
    eh *= 2;
    ew *= 2;
    if (stage == 0) emb = ad::layer_norm_rows(emb, base("upscale_norm.gamma"), base("upscale_norm.beta"));
    emb = ad::gelu(emb);
  }

  Output out;
  out.out_h = eh;
  out.out_w = ew;
  for (int s = 0; s < cfg.n_mask_tokens; ++s) {
    Var hyper = mlp3("hyper." + std::to_string(s), ad::slice_rows(tok, 1 + s, 1));
    out.slot_logits.push_back(ad::matmul_nt(emb, hyper));
    check_finite(out.slot_logits.back(), -1, "mask head");
  }
  out.iou = ad::sigmoid(mlp3("iou_head", ad::slice_rows(tok, 0, 1)));
  return out;
}

peft::ArrayMap DecoderGraph::base_gradients() const {
  peft::ArrayMap g;
  for (const auto& [name, v] : base_vars_) g.emplace(name, tape_.grad(v));
  return g;
}

peft::ArrayMap DecoderGraph::peft_gradients() const {
  peft::ArrayMap g;
  for (const auto& [name, v] : peft_vars_) g.emplace(name, tape_.grad(v));
  return g;
}

MaskLogits decode(const FeatureGrid& grid, const TokenSequence& prompts, const DecoderWeights& weights,
                  const peft::EPEFTState* peft) {
  ad::Tape tape;
  DecoderGraph graph(tape, weights, peft);
  Var feats = tape.constant(grid.features);
  Var toks = tape.constant(prompts);
  const DecoderGraph::Output out = graph.forward(feats, toks, grid.h, grid.w);

  MaskLogits ml;
  ml.height = out.out_h;
  ml.width = out.out_w;
  for (const Var& slot : out.slot_logits) {
    ml.logits.emplace_back(Eigen::Map<const Mat>(slot.value().data(), out.out_h, out.out_w));
  }
  const Mat& iou = out.iou.value();
  ml.iou_pred.assign(iou.data(), iou.data() + iou.size());
  return ml;
}

BinaryMask binarize(const MaskLogits& ml, int slot, ImageSize target_size, float threshold) {
  if (slot < 0 || slot >= ml.slots()) {
    throw SlotError("slot " + std::to_string(slot) + " out of range [0, " + std::to_string(ml.slots()) + ")");
  }
  const Mat resized = resize_bilinear(ml.logits[static_cast<std::size_t>(slot)], target_size.height, target_size.width);
  BinaryMask mask(target_size.height, target_size.width);
  mask.threshold_used = threshold;
  for (int y = 0; y < target_size.height; ++y)
    for (int x = 0; x < target_size.width; ++x) mask.set(y, x, resized(y, x) > threshold);
  return mask;
}

}  // namespace vplab

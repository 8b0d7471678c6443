#include "vplab/trainer/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vplab/common/container.hpp"
#include "vplab/common/rng.hpp"
#include "vplab/segcore/decoder.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/trainer/adam.hpp"

namespace vplab::trainer {

namespace {

struct Item {
  FeatureGrid grid;
  BinaryMask gt;
  Mat target;  // (out_h * out_w) x 1
  std::vector<std::pair<int, int>> inside;
  std::vector<std::pair<int, int>> outside;
  std::vector<PointPrompt> matched;  // self-match prompts from the default matcher
};

std::vector<PointPrompt> random_prompts(const Item& it, Rng& rng) {
  std::vector<PointPrompt> pts;
  const double mode = rng.uniform();
  if (mode < 0.4 && !it.matched.empty()) {
    pts = it.matched;
  } else if (mode < 0.7) {
    matcher::MatcherParams mp;
    mp.k_max = rng.uniform_int(1, 5);
    pts = gt_points(it.gt, it.grid.stride, mp);
  } else {
    const int k = rng.uniform_int(1, 5);
    for (int i = 0; i < k; ++i) {
      const auto& [y, x] = it.inside[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(it.inside.size()) - 1))];
      pts.push_back({x + 0.5, y + 0.5, Polarity::positive});
    }
  }
  if (!it.outside.empty() && rng.uniform() < 0.2) {
    const auto& [y, x] = it.outside[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(it.outside.size()) - 1))];
    pts.push_back({x + 0.5, y + 0.5, Polarity::negative});
  }
  return pts;
}

}  // namespace

DecoderWeights pretrain_base(const DecoderConfig& cfg, const PretrainConfig& pc, const ProgressSink& sink) {
  cfg.validate();
  DecoderWeights w = DecoderWeights::initialize(cfg, mix_seed(pc.seed, 0xba5e));
  const auto data = make_synthetic_dataset({pc.family, pc.images, pc.image_size}, pc.seed);

  std::vector<Item> items;
  items.reserve(data.size());
  for (const LabeledExample& ex : data) {
    Item it;
    it.grid = encode_image(ex.image, w.encoder_id);
    it.gt = ex.gt_mask;
    const Mat t = target_grid(ex.gt_mask, it.grid.h * cfg.upscale, it.grid.w * cfg.upscale);
    it.target = Eigen::Map<const Mat>(t.data(), t.size(), 1);
    try {
      const matcher::MatcherParams mp;
      it.matched = matcher::sample_points(matcher::similarity_map(matcher::build_reference(it.grid, it.gt), it.grid),
                                          mp.tau, mp.k_max, mp.nms_radius);
    } catch (const Error&) {
    }
    for (int y = 0; y < ex.gt_mask.height; ++y)
      for (int x = 0; x < ex.gt_mask.width; ++x) (ex.gt_mask.at(y, x) ? it.inside : it.outside).emplace_back(y, x);
    items.push_back(std::move(it));
  }

  TrainConfig loss_cfg;
  Adam adam(pc.lr);
  Rng rng(mix_seed(pc.seed, 0x9e7));
  const int report_every = std::max(1, pc.steps / 50);
  double running = 0.0;
  int running_n = 0;

  for (int step = 0; step < pc.steps; ++step) {
    const double progress = static_cast<double>(step) / std::max(1, pc.steps - 1);
    adam.set_lr(pc.lr_final + 0.5 * (pc.lr - pc.lr_final) * (1.0 + std::cos(std::numbers::pi * progress)));
    peft::ArrayMap grads;
    for (int b = 0; b < pc.batch_size; ++b) {
      const Item& it = items[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(items.size()) - 1))];
      const std::vector<PointPrompt> pts = random_prompts(it, rng);

      ad::Tape tape;
      DecoderGraph graph(tape, w, nullptr, GraphOptions{true, false});
      const ad::Var prompts = graph.prompt_tokens(pts, it.gt.size());
      const DecoderGraph::Output out = graph.forward(tape.constant(it.grid.features), prompts, it.grid.h, it.grid.w);

      std::size_t best_slot = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s < out.slot_logits.size(); ++s) {
        const double l = segmentation_loss_grid(out.slot_logits[s].value(), it.target, loss_cfg).total;
        if (l < best) {
          best = l;
          best_slot = s;
        }
      }
      const Mat& logits = out.slot_logits[best_slot].value();
      double inter = 0.0;
      double uni = 0.0;
      for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const bool p = logits(i, 0) > 0.0;
        const bool g = it.target(i, 0) > 0.5;
        inter += (p && g) ? 1.0 : 0.0;
        uni += (p || g) ? 1.0 : 0.0;
      }
      const double actual_iou = uni == 0.0 ? 1.0 : inter / uni;

      ad::Var loss = segmentation_loss_node(out.slot_logits[best_slot], it.target, loss_cfg);
      const ad::Var pred = ad::slice_cols(out.iou, static_cast<Eigen::Index>(best_slot), 1);
      Mat target_iou(1, 1);
      target_iou(0, 0) = actual_iou;
      const ad::Var diff = ad::sub(pred, tape.constant(target_iou));
      loss = ad::add(loss, ad::scale(ad::mul(diff, diff), pc.iou_weight));
      tape.backward(loss, Mat::Ones(1, 1));
      for (auto& [name, g] : graph.base_gradients()) {
        auto [pos, fresh] = grads.try_emplace(name, g);
        if (!fresh) pos->second += g;
      }
      running += loss.value()(0, 0);
      ++running_n;
    }
    adam.begin_step();
    for (auto& [name, g] : grads) adam.update(name, w.at(name), g / pc.batch_size);
    if ((step + 1) % report_every == 0 || step + 1 == pc.steps) {
      if (sink) sink(ProgressEvent{step + 1, pc.steps, running / running_n});
      running = 0.0;
      running_n = 0;
    }
  }
  for (auto& [name, m] : w.arrays) m = round_to_f32(m);
  return w;
}

}  // namespace vplab::trainer

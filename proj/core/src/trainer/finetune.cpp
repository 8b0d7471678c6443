#include "vplab/trainer/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vplab/common/rng.hpp"
#include "vplab/segcore/decoder.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/segcore/prompt_encoder.hpp"
#include "vplab/trainer/adam.hpp"

namespace vplab::trainer {

namespace {

struct Prepared {
  FeatureGrid grid;
  TokenSequence prompts;
  Mat target;  // (out_h * out_w) x 1
};

bool all_finite(const peft::EPEFTState& s) {
  bool ok = true;
  s.visit([&](const std::string&, const Mat& m) { ok = ok && m.allFinite(); });
  return ok;
}

}  // namespace

std::vector<PointPrompt> gt_points(const BinaryMask& gt, int stride, const matcher::MatcherParams& params) {
  const matcher::SimilarityMap cov = matcher::coverage_map(gt, stride);
  const double best = cov.values.maxCoeff();
  if (best <= 0.0) throw NoMatch("ground-truth mask is empty");
  const double tau = std::min(matcher::kCellCoverage, best * 0.999);
  return matcher::sample_points(cov, tau, params.k_max, params.nms_radius);
}

FinetuneResult finetune(const DecoderWeights& base, peft::EPEFTState state, const std::vector<LabeledExample>& data,
                        const TrainConfig& cfg, const ProgressSink& sink, const PromptPolicy& prompts) {
  cfg.validate();
  if (state.decoder != base.config) throw ConfigMismatch("EPEFT state was attached to a different decoder config");
  FinetuneResult result{std::move(state), {}};
  if (cfg.epochs == 0) return result;
  if (data.empty()) throw ConfigError("finetune needs at least one example");

  const int up = base.config.upscale;
  std::vector<Prepared> prepared;
  prepared.reserve(data.size());
  for (const LabeledExample& ex : data) {
    Prepared p;
    p.grid = encode_image(ex.image, prompts.encoder_id);
    std::vector<PointPrompt> points;
    if (prompts.reference != nullptr) {
      try {
        points = matcher::sample_points(matcher::similarity_map(*prompts.reference, p.grid), prompts.params.tau,
                                        prompts.params.k_max, prompts.params.nms_radius);
      } catch (const NoMatch&) {
      }
    }
    if (points.empty()) points = gt_points(ex.gt_mask, p.grid.stride, prompts.params);
    p.prompts = encode_points(points, ex.image.size(), base);
    const Mat t = target_grid(ex.gt_mask, p.grid.h * up, p.grid.w * up);
    p.target = Eigen::Map<const Mat>(t.data(), t.size(), 1);
    prepared.push_back(std::move(p));
  }

  Adam adam(cfg.lr);
  Rng rng(mix_seed(cfg.seed, 0xf17e));
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), 0);
  peft::EPEFTState& st = result.state;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      peft::ArrayMap grads;
      for (std::size_t k = start; k < stop; ++k) {
        const Prepared& p = prepared[order[k]];
        ad::Tape tape;
        DecoderGraph graph(tape, base, &st, GraphOptions{false, true});
        DecoderGraph::Output out;
        try {
          out = graph.forward(tape.constant(p.grid.features), tape.constant(p.prompts), p.grid.h, p.grid.w);
        } catch (const NumericalError& e) {
          throw TrainingDiverged(std::string("forward pass diverged: ") + e.what(), st, result.history);
        }
        std::size_t best_slot = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < out.slot_logits.size(); ++s) {
          const double l = segmentation_loss_grid(out.slot_logits[s].value(), p.target, cfg).total;
          if (l < best) {
            best = l;
            best_slot = s;
          }
        }
        if (!std::isfinite(best)) throw TrainingDiverged("non-finite loss", st, result.history);
        const ad::Var loss = segmentation_loss_node(out.slot_logits[best_slot], p.target, cfg);
        tape.backward(loss, Mat::Ones(1, 1));
        for (auto& [name, g] : graph.peft_gradients()) {
          auto [it, fresh] = grads.try_emplace(name, g);
          if (!fresh) it->second += g;
        }
        epoch_loss += best;
      }
      const peft::EPEFTState before = st;
      const double inv = 1.0 / static_cast<double>(stop - start);
      adam.begin_step();
      st.visit([&](const std::string& name, Mat& m) {
        auto it = grads.find(name);
        if (it != grads.end()) adam.update(name, m, it->second * inv);
      });
      if (!all_finite(st)) throw TrainingDiverged("parameters became non-finite", before, result.history);
    }
    epoch_loss /= static_cast<double>(order.size());
    result.history.epoch_loss.push_back(epoch_loss);
    if (sink) sink(ProgressEvent{epoch, cfg.epochs, epoch_loss});
  }
  return result;
}

}  // namespace vplab::trainer

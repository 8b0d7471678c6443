#include "vplab/matcher/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "vplab/common/error.hpp"
#include "vplab/segcore/decoder.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/segcore/prompt_encoder.hpp"

namespace vplab::matcher {

std::string to_string(LabelStatus s) {
  switch (s) {
    case LabelStatus::predicted: return "predicted";
    case LabelStatus::refined: return "refined";
    case LabelStatus::validated: return "validated";
  }
  return "predicted";
}

LabelStatus label_status_from_string(const std::string& s) {
  if (s == "predicted") return LabelStatus::predicted;
  if (s == "refined") return LabelStatus::refined;
  if (s == "validated") return LabelStatus::validated;
  throw std::invalid_argument("unknown label status '" + s + "'");
}

bool can_transition(LabelStatus from, LabelStatus to) {
  return static_cast<int>(to) >= static_cast<int>(from);
}

void PseudoLabel::advance(LabelStatus to) {
  if (!can_transition(status, to)) {
    throw std::logic_error("label status cannot move from " + to_string(status) + " to " + to_string(to));
  }
  status = to;
}

ReferenceSet build_reference(const FeatureGrid& grid, const BinaryMask& mask) {
  if (mask.height != grid.h * grid.stride || mask.width != grid.w * grid.stride) {
    throw ShapeError("reference mask size does not match the grid's source image");
  }
  ReferenceSet ref;
  ref.source_image_id = grid.source_image_id;
  const int area = grid.stride * grid.stride;
  Vec sum = Vec::Zero(grid.dim());
  for (int i = 0; i < grid.h; ++i) {
    for (int j = 0; j < grid.w; ++j) {
      int covered = 0;
      for (int y = i * grid.stride; y < (i + 1) * grid.stride; ++y)
        for (int x = j * grid.stride; x < (j + 1) * grid.stride; ++x) covered += mask.at(y, x) ? 1 : 0;
      if (covered < kCellCoverage * area) continue;
      Vec v = grid.cell(i, j).transpose();
      const double n = v.norm();
      if (n <= 0.0) continue;
      v /= n;
      sum += v;
      ref.vectors.push_back(std::move(v));
    }
  }
  if (ref.vectors.empty()) throw EmptyReference("reference mask covers no feature cell");
  ref.centroid = sum / sum.norm();
  return ref;
}

SimilarityMap similarity_map(const ReferenceSet& ref, const FeatureGrid& target) {
  if (ref.vectors.empty()) throw EmptyReference("empty reference set");
  if (ref.vectors.front().size() != target.dim()) throw ShapeError("reference and target feature widths differ");
  Mat refs(static_cast<Eigen::Index>(ref.vectors.size()), target.dim());
  for (std::size_t r = 0; r < ref.vectors.size(); ++r) refs.row(static_cast<Eigen::Index>(r)) = ref.vectors[r].transpose();

  Mat normed = target.features;
  for (Eigen::Index i = 0; i < normed.rows(); ++i) {
    const double n = normed.row(i).norm();
    normed.row(i) = n > 0.0 ? Mat(normed.row(i) / n) : Mat::Zero(1, normed.cols());
  }
  const Mat sims = normed * refs.transpose();  // cells x refs

  SimilarityMap sm;
  sm.h = target.h;
  sm.w = target.w;
  sm.stride = target.stride;
  sm.values.resize(target.h, target.w);
  for (int i = 0; i < target.h; ++i) {
    for (int j = 0; j < target.w; ++j) {
      const double best = sims.row(static_cast<Eigen::Index>(i) * target.w + j).maxCoeff();
      sm.values(i, j) = std::clamp(best, -1.0, 1.0);
    }
  }
  return sm;
}

std::vector<PointPrompt> sample_points(const SimilarityMap& sm, double tau, int k_max, int nms_radius) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must be in (0, 1)");
  struct Cell {
    double score;
    int row;
    int col;
  };
  std::vector<Cell> candidates;
  for (int i = 0; i < sm.h; ++i)
    for (int j = 0; j < sm.w; ++j)
      if (sm.at(i, j) >= tau) candidates.push_back({sm.at(i, j), i, j});
  if (candidates.empty()) throw NoMatch("no cell reaches similarity " + std::to_string(tau));

  std::sort(candidates.begin(), candidates.end(), [](const Cell& a, const Cell& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });

  std::vector<Cell> picked;
  for (const Cell& c : candidates) {
    if (static_cast<int>(picked.size()) >= k_max) break;
    const bool suppressed = std::any_of(picked.begin(), picked.end(), [&](const Cell& p) {
      return std::max(std::abs(p.row - c.row), std::abs(p.col - c.col)) <= nms_radius;
    });
    if (!suppressed) picked.push_back(c);
  }

  std::vector<PointPrompt> points;
  points.reserve(picked.size());
  for (const Cell& c : picked) {
    points.push_back({(c.col + 0.5) * sm.stride, (c.row + 0.5) * sm.stride, Polarity::positive});
  }
  return points;
}

SimilarityMap coverage_map(const BinaryMask& mask, int stride) {
  SimilarityMap sm;
  sm.h = mask.height / stride;
  sm.w = mask.width / stride;
  sm.stride = stride;
  sm.values = Mat::Zero(sm.h, sm.w);
  for (int y = 0; y < sm.h * stride; ++y)
    for (int x = 0; x < sm.w * stride; ++x)
      if (mask.at(y, x)) sm.values(y / stride, x / stride) += 1.0;
  sm.values /= static_cast<double>(stride * stride);
  return sm;
}

PseudoLabel pseudolabel_from_grid(const Model& model, const peft::EPEFTState* peft, const ReferenceSet& ref,
                                  const FeatureGrid& grid, ImageSize image_size, const MatcherParams& params) {
  PseudoLabel label;
  label.image_id = grid.source_image_id;
  std::vector<PointPrompt> points;
  try {
    points = sample_points(similarity_map(ref, grid), params.tau, params.k_max, params.nms_radius);
  } catch (const NoMatch&) {
    label.mask = BinaryMask(image_size.height, image_size.width);
    label.mask.threshold_used = params.threshold;
    label.confidence = 0.0;
    return label;
  }
  const TokenSequence tokens = encode_points(points, image_size, *model.weights);
  const MaskLogits ml = decode(grid, tokens, *model.weights, peft);
  const int slot = ml.best_slot();
  label.mask = binarize(ml, slot, image_size, params.threshold);
  label.confidence = std::clamp(ml.iou_pred[static_cast<std::size_t>(slot)], 0.0, 1.0);
  label.points = std::move(points);
  return label;
}

PseudoLabel pseudolabel_one(const Model& model, const peft::EPEFTState* peft, const ReferenceSet& ref,
                            const ImageRGB& target, const MatcherParams& params) {
  const FeatureGrid grid = encode_image(target, model.encoder_id);
  return pseudolabel_from_grid(model, peft, ref, grid, target.size(), params);
}

std::vector<PseudoLabel> generate_pseudolabels(const Model& model, const peft::EPEFTState* peft,
                                               const ReferenceSet& ref, const std::vector<ImageRGB>& targets,
                                               const MatcherParams& params) {
  std::vector<PseudoLabel> out(targets.size());
  const int threads = std::max(1, std::min<int>(params.threads, static_cast<int>(targets.size())));
  if (threads <= 1) {
    for (std::size_t i = 0; i < targets.size(); ++i) out[i] = pseudolabel_one(model, peft, ref, targets[i], params);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = static_cast<std::size_t>(t); i < targets.size(); i += static_cast<std::size_t>(threads)) {
            out[i] = pseudolabel_one(model, peft, ref, targets[i], params);
          }
        } catch (...) {
          errors[static_cast<std::size_t>(t)] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace vplab::matcher

#pragma once

#include <string>
#include <vector>

#include "vplab/peft/state.hpp"
#include "vplab/segcore/types.hpp"
#include "vplab/segcore/weights.hpp"

namespace vplab::matcher {

/// Unit-norm feature vectors taken from reference cells under the validated
/// mask, plus their normalized mean.
struct ReferenceSet {
  std::vector<Vec> vectors;
  Vec centroid;
  std::string source_image_id;
  std::string source_mask_id;
};

/// Per-cell max cosine similarity against a reference set, row-major h x w.
struct SimilarityMap {
  int h = 0;
  int w = 0;
  int stride = 0;
  Mat values;  ///< h x w

  [[nodiscard]] double at(int row, int col) const { return values(row, col); }
};

enum class LabelStatus { predicted, refined, validated };

std::string to_string(LabelStatus s);
LabelStatus label_status_from_string(const std::string& s);
/// Forward-only: predicted -> refined -> validated (staying put is allowed).
bool can_transition(LabelStatus from, LabelStatus to);

struct PseudoLabel {
  BinaryMask mask;
  double confidence = 0.0;
  LabelStatus status = LabelStatus::predicted;
  std::vector<PointPrompt> points;  ///< prompts the decoder saw; empty on no match
  std::string image_id;

  /// Throws std::logic_error on a backward transition.
  void advance(LabelStatus to);
};

struct MatcherParams {
  double tau = 0.5;
  int k_max = 5;
  int nms_radius = 1;
  float threshold = 0.0f;
  /// Worker threads for generate_pseudolabels; results do not depend on it.
  int threads = 1;
};

/// Fraction of a cell's pixels that must be masked for the cell to count.
inline constexpr double kCellCoverage = 0.5;

/// Throws EmptyReference when no cell reaches the coverage threshold,
/// ShapeError when the mask is not the grid's source size.
ReferenceSet build_reference(const FeatureGrid& grid, const BinaryMask& mask);

/// Throws ShapeError when feature widths differ.
SimilarityMap similarity_map(const ReferenceSet& ref, const FeatureGrid& target);

/// Greedy descending-score selection of cells >= tau with Chebyshev-radius
/// suppression; ties broken by (row, col). Each pick becomes a positive
/// point at its cell centre. Throws NoMatch when no cell reaches tau.
std::vector<PointPrompt> sample_points(const SimilarityMap& sm, double tau, int k_max, int nms_radius);

/// Coverage fraction of each cell by `mask`, as a SimilarityMap; lets the
/// point sampler pick prompts straight from a ground-truth mask.
SimilarityMap coverage_map(const BinaryMask& mask, int stride);

/// Frozen base decoder plus the encoder it reads.
struct Model {
  const DecoderWeights* weights = nullptr;
  std::string encoder_id = "toy-patch";
};

/// encode -> similarity -> sample -> decode -> binarize the best-IoU slot.
/// NoMatch yields an empty mask with confidence 0; the batch never aborts.
PseudoLabel pseudolabel_one(const Model& model, const peft::EPEFTState* peft, const ReferenceSet& ref,
                            const ImageRGB& target, const MatcherParams& params);

/// Same as pseudolabel_one with a precomputed target grid.
PseudoLabel pseudolabel_from_grid(const Model& model, const peft::EPEFTState* peft, const ReferenceSet& ref,
                                  const FeatureGrid& grid, ImageSize image_size, const MatcherParams& params);

std::vector<PseudoLabel> generate_pseudolabels(const Model& model, const peft::EPEFTState* peft,
                                               const ReferenceSet& ref, const std::vector<ImageRGB>& targets,
                                               const MatcherParams& params = {});

}  // namespace vplab::matcher

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vplab/common/rng.hpp"
#include "vplab/peft/peft.hpp"
#include "vplab/segcore/decoder.hpp"
#include "vplab/segcore/encoder.hpp"
#include "vplab/segcore/prompt_encoder.hpp"

namespace vplab::testing {

struct GradCheckResult {
  int checked = 0;
  int passed = 0;
  std::vector<std::string> failures;
  [[nodiscard]] double pass_rate() const { return checked == 0 ? 0.0 : static_cast<double>(passed) / checked; }
};

/// Central-difference check of d/dtheta sum(W * logits) for EPEFT arrays
/// whose names start with one of `prefixes`. At most `per_array` entries are
/// sampled from each array.
class PeftGradCheck {
 public:
  PeftGradCheck(const DecoderWeights& base, peft::EPEFTState state, const ImageRGB& img,
                std::vector<PointPrompt> points, std::uint64_t seed)
      : base_(base), state_(std::move(state)), grid_(encode_image(img)), points_(std::move(points)), rng_(seed) {
    const MaskLogits ml = decode(grid_, prompts(), base_, &state_);
    weights_ = rng_.normal_matrix(ml.height, ml.width, 1.0);
  }

  GradCheckResult run(const std::vector<std::string>& prefixes, int per_array, double eps = 1e-3,
                      double rel_tol = 1e-2, double abs_floor = 1e-5) {
    const peft::ArrayMap grads = analytic();
    GradCheckResult res;
    std::vector<std::string> names;
    state_.visit([&](const std::string& name, const Mat&) {
      for (const auto& p : prefixes)
        if (name.rfind(p, 0) == 0) names.push_back(name);
    });
    for (const std::string& name : names) {
      const Mat& g = grads.at(name);
      const Eigen::Index n = g.size();
      for (int s = 0; s < std::min<Eigen::Index>(per_array, n); ++s) {
        const Eigen::Index i = n <= per_array ? s : static_cast<Eigen::Index>(rng_.next_u64() % n);
        const double orig = entry(name, i);
        set_entry(name, i, orig + eps);
        const double up = objective();
        set_entry(name, i, orig - eps);
        const double down = objective();
        set_entry(name, i, orig);
        const double numeric = (up - down) / (2 * eps);
        const double a = g(i);
        ++res.checked;
        if (std::abs(a - numeric) <= rel_tol * std::max(std::abs(a), std::abs(numeric)) + abs_floor) {
          ++res.passed;
        } else {
          res.failures.push_back(name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) + " numeric " +
                                 std::to_string(numeric));
        }
      }
    }
    return res;
  }

  [[nodiscard]] const peft::EPEFTState& state() const { return state_; }

 private:
  Mat prompts() const { return encode_points(points_, {grid_.h * grid_.stride, grid_.w * grid_.stride}, base_); }

  double objective() const {
    const MaskLogits ml = decode(grid_, prompts(), base_, &state_);
    return (ml.logits[0].array() * weights_.array()).sum();
  }

  peft::ArrayMap analytic() const {
    ad::Tape tape;
    DecoderGraph graph(tape, base_, &state_, GraphOptions{false, true});
    const auto out = graph.forward(tape.constant(grid_.features), tape.constant(prompts()), grid_.h, grid_.w);
    const Mat seed = Eigen::Map<const Mat>(weights_.data(), weights_.size(), 1);
    tape.backward(out.slot_logits[0], seed);
    return graph.peft_gradients();
  }

  double entry(const std::string& target, Eigen::Index i) const {
    double v = 0;
    state_.visit([&](const std::string& name, const Mat& m) {
      if (name == target) v = m(i);
    });
    return v;
  }

  void set_entry(const std::string& target, Eigen::Index i, double v) {
    state_.visit([&](const std::string& name, Mat& m) {
      if (name == target) m(i) = v;
    });
  }

  const DecoderWeights& base_;
  peft::EPEFTState state_;
  FeatureGrid grid_;
  std::vector<PointPrompt> points_;
  Rng rng_;
  Mat weights_;
};

}  // namespace vplab::testing

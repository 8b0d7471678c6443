#pragma once

#include <map>
#include <string>

#include "vplab/common/tensor.hpp"

namespace vplab::trainer {

/// Adam with bias correction; moments are kept per named array.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Starts a new optimizer step; call once before the update() calls of that step.
  void begin_step() { ++t_; }
  void update(const std::string& name, Mat& param, const Mat& grad);

  [[nodiscard]] int steps() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  struct Moments {
    Mat m;
    Mat v;
  };
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  int t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace vplab::trainer

#include "vplab/trainer/adam.hpp"

#include <cmath>

#include "vplab/common/error.hpp"

namespace vplab::trainer {

void Adam::update(const std::string& name, Mat& param, const Mat& grad) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
    throw ShapeError("gradient shape does not match parameter '" + name + "'");
  }
  auto [it, fresh] = moments_.try_emplace(name);
  Moments& mo = it->second;
  if (fresh) {
    mo.m = Mat::Zero(param.rows(), param.cols());
    mo.v = Mat::Zero(param.rows(), param.cols());
  }
  mo.m = beta1_ * mo.m + (1.0 - beta1_) * grad;
  mo.v = beta2_ * mo.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  param.array() -= lr_ * (mo.m.array() / c1) / ((mo.v.array() / c2).sqrt() + eps_);
}

}  // namespace vplab::trainer

#include "vplab/trainer/loss.hpp"

#include <cmath>

#include "vplab/common/error.hpp"

namespace vplab::trainer {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid TrainConfig: " + m); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (lambda_focal < 0.0 || lambda_dice < 0.0) fail("loss weights must be non-negative");
  if (lambda_focal == 0.0 && lambda_dice == 0.0) fail("loss weights cannot both be zero");
  if (focal_gamma < 0.0) fail("focal_gamma must be non-negative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},       {"lr", c.lr},
                     {"batch_size", c.batch_size}, {"lambda_focal", c.lambda_focal},
                     {"lambda_dice", c.lambda_dice}, {"focal_gamma", c.focal_gamma},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.lr = j.value("lr", d.lr);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lambda_focal = j.value("lambda_focal", d.lambda_focal);
  c.lambda_dice = j.value("lambda_dice", d.lambda_dice);
  c.focal_gamma = j.value("focal_gamma", d.focal_gamma);
  c.seed = j.value("seed", d.seed);
}

namespace {

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// log(sigmoid(z)) without overflow.
double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }

struct FocalPixel {
  double loss;
  double grad;
};

FocalPixel focal_pixel(double z, double y, double gamma) {
  const double s = y > 0.5 ? 1.0 : -1.0;
  const double pt = sigmoid(s * z);
  const double log_pt = log_sigmoid(s * z);
  const double q = 1.0 - pt;
  const double qg = gamma == 0.0 ? 1.0 : std::pow(q, gamma);
  return {-qg * log_pt, s * (gamma * qg * pt * log_pt - qg * q)};
}

}  // namespace

double focal_loss(const Mat& logits, const Mat& target, double gamma) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) sum += focal_pixel(logits.data()[i], target.data()[i], gamma).loss;
  return sum / static_cast<double>(logits.size());
}

double dice_loss(const Mat& logits, const Mat& target) {
  double inter = 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits.data()[i]);
    inter += p * target.data()[i];
    total += p + target.data()[i];
  }
  return 1.0 - (2.0 * inter + 1.0) / (total + 1.0);
}

Mat target_grid(const BinaryMask& gt, int height, int width) {
  const BinaryMask r = resize_nearest(gt, height, width);
  Mat t(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) t(y, x) = r.at(y, x) ? 1.0 : 0.0;
  return t;
}

LossTerms segmentation_loss_grid(const Mat& logits, const Mat& target, const TrainConfig& cfg) {
  if (logits.rows() != target.rows() || logits.cols() != target.cols()) {
    throw ShapeError("logits and target differ in shape");
  }
  const auto n = static_cast<double>(logits.size());
  LossTerms t;
  t.grad = Mat::Zero(logits.rows(), logits.cols());

  double inter = 0.0;
  double total = 0.0;
  Mat p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double z = logits.data()[i];
    const double y = target.data()[i];
    const FocalPixel f = focal_pixel(z, y, cfg.focal_gamma);
    t.focal += f.loss;
    t.grad.data()[i] = cfg.lambda_focal * f.grad / n;
    p.data()[i] = sigmoid(z);
    inter += p.data()[i] * y;
    total += p.data()[i] + y;
  }
  t.focal /= n;

  const double num = 2.0 * inter + 1.0;
  const double den = total + 1.0;
  t.dice = 1.0 - num / den;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double pi = p.data()[i];
    const double dd_dp = (2.0 * target.data()[i] * den - num) / (den * den);
    t.grad.data()[i] -= cfg.lambda_dice * dd_dp * pi * (1.0 - pi);
  }
  t.total = cfg.lambda_focal * t.focal + cfg.lambda_dice * t.dice;
  return t;
}

LossTerms segmentation_loss(const Mat& logits, const BinaryMask& gt, const TrainConfig& cfg) {
  return segmentation_loss_grid(logits, target_grid(gt, static_cast<int>(logits.rows()), static_cast<int>(logits.cols())),
                                cfg);
}

ad::Var segmentation_loss_node(ad::Var logits, const Mat& target, const TrainConfig& cfg, LossTerms* terms) {
  const Mat flat_target = Eigen::Map<const Mat>(target.data(), logits.rows(), logits.cols());
  LossTerms t = segmentation_loss_grid(logits.value(), flat_target, cfg);
  Mat value(1, 1);
  value(0, 0) = t.total;
  Mat grad = t.grad;
  if (terms != nullptr) *terms = std::move(t);
  return logits.tape()->record(std::move(value), {logits},
                               [logits, grad = std::move(grad)](ad::Tape& tape, const Mat& g, const Mat&) {
                                 tape.accumulate(logits, grad * g(0, 0));
                               });
}

}  // namespace vplab::trainer

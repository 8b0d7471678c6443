#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "vplab/common/error.hpp"
#include "vplab/peft/peft.hpp"
#include "vplab/trainer/adam.hpp"
#include "vplab/trainer/finetune.hpp"
#include "vplab/trainer/loss.hpp"
#include "vplab/trainer/metrics.hpp"
#include "vplab/trainer/synthetic.hpp"

using namespace vplab;
using namespace vplab::trainer;

namespace {

// Pixel-count IoU written independently of the library.
double naive_iou(const BinaryMask& a, const BinaryMask& b) {
  long inter = 0;
  long uni = 0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      inter += a.at(y, x) && b.at(y, x);
      uni += a.at(y, x) || b.at(y, x);
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST(Loss, PerfectPredictionIsZero) {
  Mat target(2, 2);
  target << 1, 0, 0, 1;
  const Mat logits = (target.array() * 2 - 1) * 60.0;
  EXPECT_NEAR(focal_loss(logits, target, 2.0), 0.0, 1e-12);
  EXPECT_NEAR(dice_loss(logits, target), 0.0, 1e-12);
}

TEST(Loss, DiceHalfProbability) {
  EXPECT_NEAR(dice_loss(Mat::Zero(2, 2), Mat::Ones(2, 2)), 2.0 / 7.0, 1e-12);
}

TEST(Loss, FocalWithZeroGammaIsBce) {
  Rng rng(4);
  const Mat logits = rng.normal_matrix(5, 5, 2.0);
  Mat target(5, 5);
  for (Eigen::Index i = 0; i < target.size(); ++i) target(i) = rng.uniform() < 0.4 ? 1.0 : 0.0;
  double bce = 0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits(i));
    bce -= target(i) * std::log(p) + (1 - target(i)) * std::log(1 - p);
  }
  EXPECT_NEAR(focal_loss(logits, target, 0.0), bce / 25.0, 1e-6);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  const Mat logits = rng.normal_matrix(4, 6, 1.5);
  Mat target(4, 6);
  for (Eigen::Index i = 0; i < target.size(); ++i) target(i) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  TrainConfig cfg;
  cfg.lambda_focal = 0.7;
  cfg.lambda_dice = 1.3;
  const auto terms = segmentation_loss_grid(logits, target, cfg);
  EXPECT_NEAR(terms.total, 0.7 * terms.focal + 1.3 * terms.dice, 1e-12);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Mat up = logits;
    Mat down = logits;
    up(i) += 1e-6;
    down(i) -= 1e-6;
    const double numeric =
        (segmentation_loss_grid(up, target, cfg).total - segmentation_loss_grid(down, target, cfg).total) / 2e-6;
    EXPECT_NEAR(terms.grad(i), numeric, 1e-6);
  }
  EXPECT_THROW(segmentation_loss_grid(logits, Mat::Zero(3, 3), cfg), ShapeError);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.lambda_dice = c.lambda_focal = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.epochs = 3;
  c.seed = 99;
  const TrainConfig back = nlohmann::json(c).get<TrainConfig>();
  EXPECT_EQ(back.epochs, 3);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(nlohmann::json::object().get<TrainConfig>().epochs, TrainConfig{}.epochs);
}

TEST(Metrics, Examples) {
  BinaryMask full(8, 8, true);
  BinaryMask left(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) left.set(y, x, true);
  BinaryMask right = left;
  for (auto& b : right.bits) b = 1 - b;
  EXPECT_DOUBLE_EQ(evaluate_miou({full}, {full}), 100.0);
  EXPECT_DOUBLE_EQ(evaluate_miou({left}, {right}), 0.0);
  EXPECT_DOUBLE_EQ(evaluate_miou({left}, {full}), 50.0);
  EXPECT_THROW(evaluate_miou({left}, {}), ShapeError);
  EXPECT_THROW(iou(left, BinaryMask(4, 4)), ShapeError);
}

TEST(Metrics, MatchesNaiveOracle) {
  Rng rng(100);
  std::vector<BinaryMask> preds;
  std::vector<BinaryMask> gts;
  double sum = 0;
  for (int i = 0; i < 100; ++i) {
    preds.push_back(vplab::testing::random_mask(16, 16, rng, rng.uniform()));
    gts.push_back(vplab::testing::random_mask(16, 16, rng, rng.uniform()));
    EXPECT_EQ(iou(preds.back(), gts.back()), naive_iou(preds.back(), gts.back()));
    sum += naive_iou(preds.back(), gts.back());
  }
  EXPECT_EQ(evaluate_miou(preds, gts), 100.0 * (sum / 100.0));
}

TEST(Synthetic, DeterministicAndValid) {
  for (const std::string& fam : {"shapes", "blobs", "ribs", "cracks", "patches"}) {
    const auto a = make_synthetic_dataset({fam, 20, 64}, 7);
    const auto b = make_synthetic_dataset({fam, 20, 64}, 7);
    ASSERT_EQ(a.size(), 20u);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].image.pixels, b[i].image.pixels);
      EXPECT_EQ(a[i].gt_mask, b[i].gt_mask);
      EXPECT_GT(a[i].gt_mask.count(), 0u);
      EXPECT_LT(static_cast<double>(a[i].gt_mask.count()), 0.6 * 64 * 64);
      EXPECT_NO_THROW(a[i].image.validate());
      EXPECT_EQ(a[i].origin, Origin::synthetic);
    }
  }
  EXPECT_NE(make_synthetic_dataset({"blobs", 1, 64}, 1)[0].image.pixels,
            make_synthetic_dataset({"blobs", 1, 64}, 2)[0].image.pixels);
}

TEST(Synthetic, Errors) {
  EXPECT_THROW(make_synthetic_dataset({"nope", 2, 64}, 1), SpecError);
  EXPECT_THROW(make_synthetic_dataset({"blobs", 2, 60}, 1), SpecError);
  EXPECT_EQ(evaluation_families().size(), 4u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam opt(0.1);
  Mat p = Mat::Zero(1, 3);
  Mat g(1, 3);
  g << 2.0, -0.5, 0.0;
  opt.begin_step();
  opt.update("p", p, g);
  EXPECT_NEAR(p(0, 0), -0.1, 1e-6);
  EXPECT_NEAR(p(0, 1), 0.1, 1e-6);
  EXPECT_EQ(p(0, 2), 0.0);
}

class Finetune : public ::testing::Test {
 protected:
  const DecoderWeights& w = vplab::testing::fixture_weights();
  std::vector<LabeledExample> data = make_synthetic_dataset({"blobs", 4, 64}, 3);
};

TEST_F(Finetune, ZeroEpochsReturnsStateUnchanged) {
  auto state = peft::attach(peft::EPEFTConfig::ensemble(), w);
  peft::randomize(state, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto res = finetune(w, state, data, cfg);
  EXPECT_EQ(peft::save_delta(res.state), peft::save_delta(state));
  EXPECT_TRUE(res.history.epoch_loss.empty());
}

TEST_F(Finetune, SingleExampleLossDecreases) {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 1;
  const std::vector<LabeledExample> one{data[0]};
  const auto res = finetune(w, peft::attach(peft::EPEFTConfig::ensemble(), w), one, cfg);
  ASSERT_EQ(res.history.epoch_loss.size(), 50u);
  EXPECT_LT(res.history.epoch_loss.back(), res.history.epoch_loss.front());
}

TEST_F(Finetune, DeterministicForSeed) {
  TrainConfig cfg;
  cfg.epochs = 2;
  std::vector<ProgressEvent> events;
  const auto fresh = peft::attach(peft::EPEFTConfig::ensemble(), w);
  const auto a = finetune(w, fresh, data, cfg, [&](const ProgressEvent& e) { events.push_back(e); });
  const auto b = finetune(w, fresh, data, cfg);
  EXPECT_EQ(a.history.epoch_loss, b.history.epoch_loss);
  EXPECT_EQ(peft::save_delta(a.state), peft::save_delta(b.state));
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[1].epoch, 2);
  EXPECT_EQ(events[1].epochs, 2);
}

TEST_F(Finetune, BaseIsNeverModified) {
  const std::string before = weights_hash(w);
  TrainConfig cfg;
  cfg.epochs = 1;
  finetune(w, peft::attach(peft::EPEFTConfig::ensemble(), w), data, cfg);
  EXPECT_EQ(weights_hash(w), before);
}

TEST_F(Finetune, RejectsForeignState) {
  DecoderConfig other = DecoderConfig::tiny();
  other.d_mlp = 32;
  TrainConfig cfg;
  EXPECT_THROW(finetune(w, peft::attach(peft::EPEFTConfig::ensemble(), other), data, cfg), ConfigMismatch);
}

TEST_F(Finetune, DivergenceReported) {
  auto state = peft::attach(peft::EPEFTConfig::ensemble(), w);
  state.prompts.gate_tok(0, 0) = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  try {
    finetune(w, state, data, cfg);
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_TRUE(e.history.epoch_loss.empty());
  }
}

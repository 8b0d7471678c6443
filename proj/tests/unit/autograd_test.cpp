#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "vplab/autograd/tape.hpp"
#include "vplab/common/rng.hpp"

using namespace vplab;
using namespace vplab::ad;

namespace {

using Fn = std::function<Var(std::vector<Var>&)>;

// Reduces the output with a fixed random weighting so every entry matters.
double scalar_of(const Fn& f, const std::vector<Mat>& inputs, const Mat& weights) {
  Tape tape;
  std::vector<Var> vars;
  for (const Mat& m : inputs) vars.push_back(tape.constant(m));
  return (f(vars).value().array() * weights.array()).sum();
}

void check_gradients(const Fn& f, std::vector<Mat> inputs, std::uint64_t seed = 1) {
  Rng rng(seed);
  Tape probe;
  std::vector<Var> pv;
  for (const Mat& m : inputs) pv.push_back(probe.constant(m));
  const Mat out = f(pv).value();
  const Mat weights = rng.normal_matrix(out.rows(), out.cols(), 1.0);

  Tape tape;
  std::vector<Var> vars;
  for (const Mat& m : inputs) vars.push_back(tape.parameter(m));
  Var y = f(vars);
  tape.backward(y, weights);

  const double eps = 1e-5;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat analytic = tape.grad(vars[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k](i);
      inputs[k](i) = orig + eps;
      const double up = scalar_of(f, inputs, weights);
      inputs[k](i) = orig - eps;
      const double down = scalar_of(f, inputs, weights);
      inputs[k](i) = orig;
      const double numeric = (up - down) / (2 * eps);
      EXPECT_NEAR(analytic(i), numeric, 1e-6 + 1e-5 * std::abs(numeric)) << "input " << k << " entry " << i;
    }
  }
}

Mat rnd(Eigen::Index r, Eigen::Index c, std::uint64_t seed) { return Rng(seed).normal_matrix(r, c, 1.0); }

}  // namespace

TEST(Autograd, Elementwise) {
  check_gradients([](auto& v) { return add(v[0], v[1]); }, {rnd(3, 4, 1), rnd(3, 4, 2)});
  check_gradients([](auto& v) { return sub(v[0], v[1]); }, {rnd(3, 4, 1), rnd(3, 4, 2)});
  check_gradients([](auto& v) { return mul(v[0], v[1]); }, {rnd(3, 4, 1), rnd(3, 4, 2)});
  check_gradients([](auto& v) { return scale(v[0], -2.5); }, {rnd(2, 5, 3)});
  check_gradients([](auto& v) { return scale_by(v[0], v[1]); }, {rnd(2, 5, 3), rnd(1, 1, 4)});
  check_gradients([](auto& v) { return gelu(v[0]); }, {rnd(4, 4, 5)});
  check_gradients([](auto& v) { return sigmoid(v[0]); }, {rnd(4, 4, 6)});
}

TEST(Autograd, Broadcasts) {
  check_gradients([](auto& v) { return add_row(v[0], v[1]); }, {rnd(3, 4, 1), rnd(1, 4, 2)});
  check_gradients([](auto& v) { return mul_row(v[0], v[1]); }, {rnd(3, 4, 1), rnd(1, 4, 2)});
  check_gradients([](auto& v) { return broadcast_rows(v[0], 5); }, {rnd(1, 3, 7)});
  check_gradients([](auto& v) { return mean_rows(v[0]); }, {rnd(6, 3, 8)});
  check_gradients([](auto& v) { return sum_all(v[0]); }, {rnd(6, 3, 9)});
}

TEST(Autograd, Products) {
  check_gradients([](auto& v) { return matmul(v[0], v[1]); }, {rnd(3, 4, 1), rnd(4, 2, 2)});
  check_gradients([](auto& v) { return matmul_nt(v[0], v[1]); }, {rnd(3, 4, 1), rnd(5, 4, 2)});
  check_gradients([](auto& v) { return linear(v[0], v[1], v[2]); }, {rnd(3, 4, 1), rnd(5, 4, 2), rnd(1, 5, 3)});
  check_gradients([](auto& v) { return linear(v[0], v[1]); }, {rnd(3, 4, 1), rnd(5, 4, 2)});
}

TEST(Autograd, Normalization) {
  check_gradients([](auto& v) { return softmax_rows(v[0]); }, {rnd(3, 6, 11)});
  check_gradients([](auto& v) { return layer_norm_rows(v[0], v[1], v[2]); }, {rnd(4, 8, 12), rnd(1, 8, 13), rnd(1, 8, 14)});
}

TEST(Autograd, Reshaping) {
  check_gradients([](auto& v) { return concat_rows({v[0], v[1]}); }, {rnd(2, 3, 1), rnd(4, 3, 2)});
  check_gradients([](auto& v) { return concat_cols({v[0], v[1]}); }, {rnd(2, 3, 1), rnd(2, 5, 2)});
  check_gradients([](auto& v) { return slice_rows(v[0], 1, 2); }, {rnd(5, 3, 3)});
  check_gradients([](auto& v) { return slice_cols(v[0], 2, 3); }, {rnd(2, 6, 4)});
  check_gradients([](auto& v) { return pixel_shuffle2(v[0], 2, 3); }, {rnd(6, 8, 5)});
}

TEST(Autograd, PixelShuffleLayout) {
  Tape tape;
  Mat a(1, 4);
  a << 1, 2, 3, 4;
  const Mat out = pixel_shuffle2(tape.constant(a), 1, 1).value();
  ASSERT_EQ(out.rows(), 4);
  // (di*2 + dj) lands at output cell (di, dj) of a 2x2 grid.
  EXPECT_EQ(out(0, 0), 1);
  EXPECT_EQ(out(1, 0), 2);
  EXPECT_EQ(out(2, 0), 3);
  EXPECT_EQ(out(3, 0), 4);
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  Tape tape;
  Var x = tape.parameter(Mat::Constant(1, 1, 3.0));
  Var y = mul(x, x);
  tape.backward(add(y, x), Mat::Ones(1, 1));
  EXPECT_DOUBLE_EQ(tape.grad(x)(0, 0), 7.0);
}

TEST(Autograd, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Mat::Ones(2, 2));
  Var p = tape.parameter(Mat::Ones(2, 2));
  tape.backward(mul(c, p), Mat::Ones(2, 2));
  EXPECT_EQ(tape.grad(c).norm(), 0.0);
  EXPECT_EQ(tape.grad(p), Mat::Ones(2, 2));
}

TEST(Autograd, GeluMatchesErfForm) {
  for (double x : {-3.0, -1.0, 0.0, 0.5, 1.0, 2.0}) {
    EXPECT_NEAR(gelu_scalar(x), 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))), 1e-15);
  }
  EXPECT_NEAR(gelu_scalar(1.0), 0.841344746, 1e-9);
}

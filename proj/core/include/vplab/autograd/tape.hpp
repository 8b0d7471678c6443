#pragma once

#include <functional>
#include <vector>

#include "vplab/common/tensor.hpp"

namespace vplab::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Mat& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] int id() const { return id_; }
  [[nodiscard]] Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Records a forward computation over dense matrices and replays it in
/// reverse to accumulate gradients. Nodes that depend on no trainable leaf
/// store no backward closure, so an inference pass costs little more than
/// the plain arithmetic.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Mat& out_grad, const Mat& out_value)>;

  Var constant(Mat value);
  Var parameter(Mat value, bool requires_grad = true);

  /// Adds a node whose gradient flows to `inputs` through `backward`.
  Var record(Mat value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Mat value, const std::vector<Var>& inputs, Backward backward);

  [[nodiscard]] const Mat& value(const Var& v) const { return nodes_[v.id_].value; }
  [[nodiscard]] bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }

  /// Gradient accumulated at `v`; zeros of the right shape if none reached it.
  [[nodiscard]] Mat grad(const Var& v) const;

  template <typename Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(loss)/d(v) and runs the reverse sweep over every recorded node.
  void backward(const Var& output, const Mat& seed);
  /// Runs the reverse sweep after seeds were placed with accumulate().
  void backward();

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. All operands must live on the same tape.
// ---------------------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);              ///< elementwise
Var scale(Var a, double s);
Var scale_by(Var a, Var s);         ///< s is 1x1
Var add_row(Var a, Var row);        ///< broadcast a 1xC row over every row of a
Var mul_row(Var a, Var row);        ///< scale column j of a by row(0, j)
Var matmul(Var a, Var b);           ///< a * b
Var matmul_nt(Var a, Var b);        ///< a * b^T
/// x * W^T + b, the layout of a torch-style Linear (W is out x in).
Var linear(Var x, Var weight, Var bias);
Var linear(Var x, Var weight);
Var gelu(Var a);                    ///< exact erf form
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var layer_norm_rows(Var a, Var gamma, Var beta, double eps = 1e-5);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var mean_rows(Var a);               ///< 1xC column means
Var broadcast_rows(Var row, Eigen::Index n);
/// (h*w) x (4c) -> (2h*2w) x c. Input column (di*2 + dj)*c + k of cell
/// (i, j) lands at output cell (2i+di, 2j+dj), channel k.
Var pixel_shuffle2(Var a, int h, int w);
/// Sum of every entry, as a 1x1.
Var sum_all(Var a);

/// Plain (non-taped) helpers shared with reference implementations.
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace vplab::ad

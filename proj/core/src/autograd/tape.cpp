#include "vplab/autograd/tape.hpp"

#include <cmath>
#include <numbers>

#include "vplab/common/error.hpp"

namespace vplab::ad {

const Mat& Var::value() const { return tape_->value(*this); }

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::parameter(Mat value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id_].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id_].requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Mat Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id_];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& output, const Mat& seed) {
  if (seed.rows() != value(output).rows() || seed.cols() != value(output).cols()) {
    throw ShapeError("backward seed shape does not match output");
  }
  accumulate(output, seed);
  backward();
}

void Tape::backward() {
  for (auto i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.backward || n.grad.size() == 0) continue;
    // Closures only touch grads of earlier nodes, so these references stay valid.
    n.backward(*this, n.grad, n.value);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

double sigmoid_scalar(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b},
                          [a, b](Tape& t, const Mat& g, const Mat&) {
                            if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
                            if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
                          });
}

Var scale(Var a, double s) {
  return a.tape()->record(a.value() * s, {a},
                          [a, s](Tape& t, const Mat& g, const Mat&) { t.accumulate(a, g * s); });
}

Var scale_by(Var a, Var s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by expects a 1x1 scalar");
  return a.tape()->record(a.value() * s.value()(0, 0), {a, s}, [a, s](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(s)(0, 0));
    if (t.requires_grad(s)) {
      Mat gs(1, 1);
      gs(0, 0) = g.cwiseProduct(t.value(a)).sum();
      t.accumulate(s, gs);
    }
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: width mismatch");
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(a, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("mul_row: width mismatch");
  Mat out = a.value() * row.value().row(0).asDiagonal();
  return a.tape()->record(std::move(out), {a, row}, [a, row](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(row).row(0).asDiagonal());
    if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(t.value(a)).colwise().sum());
  });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
  return a.tape()->record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Mat& g, const Mat&) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimension mismatch");
  return a.tape()->record(a.value() * b.value().transpose(), {a, b},
                          [a, b](Tape& t, const Mat& g, const Mat&) {
                            if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
                            if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
                          });
}

Var linear(Var x, Var weight, Var bias) {
  if (x.cols() != weight.cols()) throw ShapeError("linear: input width mismatch");
  if (bias.rows() != 1 || bias.cols() != weight.rows()) throw ShapeError("linear: bias shape mismatch");
  Mat out = x.value() * weight.value().transpose();
  out.rowwise() += bias.value().row(0);
  return x.tape()->record(std::move(out), {x, weight, bias},
                          [x, weight, bias](Tape& t, const Mat& g, const Mat&) {
                            if (t.requires_grad(x)) t.accumulate(x, g * t.value(weight));
                            if (t.requires_grad(weight)) t.accumulate(weight, g.transpose() * t.value(x));
                            if (t.requires_grad(bias)) t.accumulate(bias, g.colwise().sum());
                          });
}

Var linear(Var x, Var weight) {
  if (x.cols() != weight.cols()) throw ShapeError("linear: input width mismatch");
  return matmul_nt(x, weight);
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Var gelu(Var a) {
  return a.tape()->record(a.value().unaryExpr(&gelu_scalar), {a}, [a](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(a, g.cwiseProduct(t.value(a).unaryExpr(&gelu_grad_scalar)));
  });
}

Var sigmoid(Var a) {
  return a.tape()->record(a.value().unaryExpr(&sigmoid_scalar), {a},
                          [a](Tape& t, const Mat& g, const Mat& y) {
                            t.accumulate(a, g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
                          });
}

Var softmax_rows(Var a) {
  const Mat& x = a.value();
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    y.row(i) = (x.row(i).array() - m).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return a.tape()->record(std::move(y), {a}, [a](Tape& t, const Mat& g, const Mat& yv) {
    Mat dx(yv.rows(), yv.cols());
    for (Eigen::Index i = 0; i < yv.rows(); ++i) {
      const double dot = g.row(i).dot(yv.row(i));
      dx.row(i) = yv.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    t.accumulate(a, dx);
  });
}

Var layer_norm_rows(Var a, Var gamma, Var beta, double eps) {
  const Mat& x = a.value();
  const Eigen::Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw ShapeError("layer_norm_rows: affine width mismatch");
  }
  Mat xhat(x.rows(), n);
  Vec inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Mat y = xhat * gamma.value().row(0).asDiagonal();
  y.rowwise() += beta.value().row(0);
  return a.tape()->record(
      std::move(y), {a, gamma, beta},
      [a, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Mat& g, const Mat&) {
        if (t.requires_grad(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(beta)) t.accumulate(beta, g.colwise().sum());
        if (!t.requires_grad(a)) return;
        const Mat gh = g * t.value(gamma).row(0).asDiagonal();
        const auto width = static_cast<double>(gh.cols());
        Mat dx(gh.rows(), gh.cols());
        for (Eigen::Index i = 0; i < gh.rows(); ++i) {
          const double mean_g = gh.row(i).sum() / width;
          const double mean_gx = gh.row(i).dot(xhat.row(i)) / width;
          dx.row(i) = inv_std(i) * (gh.row(i).array() - mean_g - xhat.row(i).array() * mean_gx).matrix();
        }
        t.accumulate(a, dx);
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: width mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, const Mat& g, const Mat&) {
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
      const Eigen::Index r = t.value(p).rows();
      if (t.requires_grad(p)) t.accumulate(p, g.middleRows(offset, r));
      offset += r;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: height mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts.front().tape()->record(std::move(out), parts, [parts](Tape& t, const Mat& g, const Mat&) {
    Eigen::Index offset = 0;
    for (const Var& p : parts) {
      const Eigen::Index c = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(offset, c));
      offset += c;
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  return a.tape()->record(a.value().middleRows(start, count), {a},
                          [a, start](Tape& t, const Mat& g, const Mat&) {
                            Mat full = Mat::Zero(t.value(a).rows(), t.value(a).cols());
                            full.middleRows(start, g.rows()) = g;
                            t.accumulate(a, full);
                          });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [a, start](Tape& t, const Mat& g, const Mat&) {
                            Mat full = Mat::Zero(t.value(a).rows(), t.value(a).cols());
                            full.middleCols(start, g.cols()) = g;
                            t.accumulate(a, full);
                          });
}

Var mean_rows(Var a) {
  const auto n = static_cast<double>(a.rows());
  return a.tape()->record(a.value().colwise().mean(), {a}, [a, n](Tape& t, const Mat& g, const Mat&) {
    Mat full(t.value(a).rows(), t.value(a).cols());
    full.rowwise() = g.row(0) / n;
    t.accumulate(a, full);
  });
}

Var broadcast_rows(Var row, Eigen::Index n) {
  if (row.rows() != 1) throw ShapeError("broadcast_rows expects a single row");
  Mat out(n, row.cols());
  out.rowwise() = row.value().row(0);
  return row.tape()->record(std::move(out), {row},
                            [row](Tape& t, const Mat& g, const Mat&) { t.accumulate(row, g.colwise().sum()); });
}

Var pixel_shuffle2(Var a, int h, int w) {
  if (a.rows() != static_cast<Eigen::Index>(h) * w || a.cols() % 4 != 0) {
    throw ShapeError("pixel_shuffle2: input must be (h*w) x (4c)");
  }
  const Eigen::Index c = a.cols() / 4;
  const int w2 = 2 * w;
  Mat out(4 * a.rows(), c);
  const Mat& x = a.value();
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int di = 0; di < 2; ++di) {
        for (int dj = 0; dj < 2; ++dj) {
          out.row((2 * i + di) * w2 + (2 * j + dj)) = x.row(i * w + j).segment((di * 2 + dj) * c, c);
        }
      }
    }
  }
  return a.tape()->record(std::move(out), {a}, [a, h, w, c, w2](Tape& t, const Mat& g, const Mat&) {
    Mat dx(static_cast<Eigen::Index>(h) * w, 4 * c);
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        for (int di = 0; di < 2; ++di) {
          for (int dj = 0; dj < 2; ++dj) {
            dx.row(i * w + j).segment((di * 2 + dj) * c, c) = g.row((2 * i + di) * w2 + (2 * j + dj));
          }
        }
      }
    }
    t.accumulate(a, dx);
  });
}

Var sum_all(Var a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [a](Tape& t, const Mat& g, const Mat&) {
    t.accumulate(a, Mat::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

}  // namespace vplab::ad

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mmvap/error.hpp"

namespace mmvap::nn {

using Mat = Eigen::MatrixXd;

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  // Adam state
  Mat adam_m;
  Mat adam_v;

  size_t size() const { return static_cast<size_t>(value.size()); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Mat val;
  Mat grad;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // adds into parents' grads
  bool requires_grad = false;
  size_t order = 0;

  void ensure_grad() {
    if (grad.rows() != val.rows() || grad.cols() != val.cols())
      grad.setZero(val.rows(), val.cols());
  }
};

/// Reverse-mode tape over dense matrices. One tape per forward pass; ops
/// append nodes in creation order and backward() replays them in reverse.
class Tape {
 public:
  NodePtr constant(Mat v) {
    auto n = make(std::move(v));
    n->requires_grad = false;
    return n;
  }

  NodePtr leaf(Param& p) {
    auto n = make(p.value);
    n->requires_grad = true;
    leaves_.emplace_back(&p, n);
    return n;
  }

  /// Runs backward from a scalar node. With accumulate_params, leaf grads are
  /// added into their Params; otherwise read them via leaves().
  void backward(const NodePtr& loss, bool accumulate_params = true) {
    if (loss->val.size() != 1)
      throw Error(ErrorCode::ShapeMismatch, "backward expects a scalar node");
    for (auto& n : nodes_) n->grad.resize(0, 0);
    loss->grad.setOnes(1, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (!n.requires_grad || !n.backprop || n.grad.size() == 0) continue;
      n.backprop(n);
    }
    if (!accumulate_params) return;
    for (auto& [param, node] : leaves_) {
      if (node->grad.size() != 0) param->grad += node->grad;
    }
  }

  const std::vector<std::pair<Param*, NodePtr>>& leaves() const { return leaves_; }

  // -- primitive ops ---------------------------------------------------

  NodePtr matmul(NodePtr a, NodePtr b) {
    check(a->val.cols() == b->val.rows(), "matmul");
    auto n = make(a->val * b->val, {a, b});
    n->backprop = [a, b](Node& self) {
      if (a->requires_grad) { a->ensure_grad(); a->grad.noalias() += self.grad * b->val.transpose(); }
      if (b->requires_grad) { b->ensure_grad(); b->grad.noalias() += a->val.transpose() * self.grad; }
    };
    return n;
  }

  /// a * b^T
  NodePtr matmul_nt(NodePtr a, NodePtr b) {
    check(a->val.cols() == b->val.cols(), "matmul_nt");
    auto n = make(a->val * b->val.transpose(), {a, b});
    n->backprop = [a, b](Node& self) {
      if (a->requires_grad) { a->ensure_grad(); a->grad.noalias() += self.grad * b->val; }
      if (b->requires_grad) { b->ensure_grad(); b->grad.noalias() += self.grad.transpose() * a->val; }
    };
    return n;
  }

  NodePtr add(NodePtr a, NodePtr b) {
    check(a->val.rows() == b->val.rows() && a->val.cols() == b->val.cols(), "add");
    auto n = make(a->val + b->val, {a, b});
    n->backprop = [a, b](Node& self) {
      if (a->requires_grad) { a->ensure_grad(); a->grad += self.grad; }
      if (b->requires_grad) { b->ensure_grad(); b->grad += self.grad; }
    };
    return n;
  }

  /// Broadcast a 1 x C row (bias) over all rows of a.
  NodePtr add_row(NodePtr a, NodePtr row) {
    check(row->val.rows() == 1 && row->val.cols() == a->val.cols(), "add_row");
    auto n = make(a->val.rowwise() + row->val.row(0), {a, row});
    n->backprop = [a, row](Node& self) {
      if (a->requires_grad) { a->ensure_grad(); a->grad += self.grad; }
      if (row->requires_grad) { row->ensure_grad(); row->grad += self.grad.colwise().sum(); }
    };
    return n;
  }

  NodePtr scale(NodePtr a, double s) {
    auto n = make(a->val * s, {a});
    n->backprop = [a, s](Node& self) {
      if (a->requires_grad) { a->ensure_grad(); a->grad += self.grad * s; }
    };
    return n;
  }

  /// Elementwise product with a fixed mask (dropout etc.).
  NodePtr mask(NodePtr a, Mat m) {
    check(m.rows() == a->val.rows() && m.cols() == a->val.cols(), "mask");
    auto shared = std::make_shared<Mat>(std::move(m));
    auto n = make(a->val.cwiseProduct(*shared), {a});
    n->backprop = [a, shared](Node& self) {
      if (a->requires_grad) { a->ensure_grad(); a->grad += self.grad.cwiseProduct(*shared); }
    };
    return n;
  }

  NodePtr add_const(NodePtr a, const Mat& c) {
    check(c.rows() == a->val.rows() && c.cols() == a->val.cols(), "add_const");
    auto n = make(a->val + c, {a});
    n->backprop = [a](Node& self) {
      if (a->requires_grad) { a->ensure_grad(); a->grad += self.grad; }
    };
    return n;
  }

  /// Exact error-function GeLU.
  NodePtr gelu(NodePtr a) {
    Mat y = a->val.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); });
    auto n = make(std::move(y), {a});
    n->backprop = [a](Node& self) {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (Eigen::Index i = 0; i < a->val.rows(); ++i)
        for (Eigen::Index j = 0; j < a->val.cols(); ++j) {
          double x = a->val(i, j);
          double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
          double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
          a->grad(i, j) += self.grad(i, j) * (cdf + x * pdf);
        }
    };
    return n;
  }

  /// Per-row layer normalization with affine gain/bias (1 x C each).
  NodePtr layer_norm(NodePtr x, NodePtr gain, NodePtr bias, double eps = 1e-5) {
    const Eigen::Index rows = x->val.rows(), cols = x->val.cols();
    check(gain->val.cols() == cols && bias->val.cols() == cols, "layer_norm");
    auto xhat = std::make_shared<Mat>(rows, cols);
    auto inv_sd = std::make_shared<Eigen::VectorXd>(rows);
    Mat y(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      double mean = x->val.row(r).mean();
      double var = (x->val.row(r).array() - mean).square().mean();
      double is = 1.0 / std::sqrt(var + eps);
      (*inv_sd)(r) = is;
      xhat->row(r) = (x->val.row(r).array() - mean) * is;
      y.row(r) = xhat->row(r).cwiseProduct(gain->val.row(0)) + bias->val.row(0);
    }
    auto n = make(std::move(y), {x, gain, bias});
    n->backprop = [x, gain, bias, xhat, inv_sd](Node& self) {
      const Eigen::Index rows = x->val.rows(), cols = x->val.cols();
      if (gain->requires_grad) {
        gain->ensure_grad();
        gain->grad += self.grad.cwiseProduct(*xhat).colwise().sum();
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        bias->grad += self.grad.colwise().sum();
      }
      if (x->requires_grad) {
        x->ensure_grad();
        const double c = static_cast<double>(cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
          Eigen::RowVectorXd dxhat = self.grad.row(r).cwiseProduct(gain->val.row(0));
          double m1 = dxhat.mean();
          double m2 = dxhat.cwiseProduct(xhat->row(r)).mean();
          x->grad.row(r) +=
              (*inv_sd)(r) * (dxhat.array() - m1 - xhat->row(r).array() * m2).matrix();
          (void)c;
        }
      }
    };
    return n;
  }

  /// Row-wise softmax restricted to keys j <= i (causal). Disallowed entries
  /// output exactly zero.
  NodePtr causal_softmax(NodePtr scores) {
    const Eigen::Index rows = scores->val.rows(), cols = scores->val.cols();
    check(rows == cols, "causal_softmax expects square scores");
    Mat y = Mat::Zero(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      Eigen::Index k = i + 1;  // allowed keys
      double mx = scores->val.row(i).head(k).maxCoeff();
      Eigen::RowVectorXd e = (scores->val.row(i).head(k).array() - mx).exp();
      y.row(i).head(k) = e / e.sum();
    }
    auto n = make(std::move(y), {scores});
    n->backprop = [scores](Node& self) {
      if (!scores->requires_grad) return;
      scores->ensure_grad();
      for (Eigen::Index i = 0; i < self.val.rows(); ++i) {
        Eigen::Index k = i + 1;
        double dot = self.grad.row(i).head(k).dot(self.val.row(i).head(k));
        scores->grad.row(i).head(k) +=
            self.val.row(i).head(k).cwiseProduct(
                (self.grad.row(i).head(k).array() - dot).matrix());
      }
    };
    return n;
  }

  NodePtr slice_cols(NodePtr a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && start + count <= a->val.cols(), "slice_cols");
    auto n = make(a->val.middleCols(start, count), {a});
    n->backprop = [a, start, count](Node& self) {
      if (a->requires_grad) {
        a->ensure_grad();
        a->grad.middleCols(start, count) += self.grad;
      }
    };
    return n;
  }

  NodePtr concat_cols(const std::vector<NodePtr>& parts) {
    check(!parts.empty(), "concat_cols");
    Eigen::Index rows = parts[0]->val.rows(), cols = 0;
    for (const auto& p : parts) {
      check(p->val.rows() == rows, "concat_cols rows");
      cols += p->val.cols();
    }
    Mat y(rows, cols);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      y.middleCols(off, p->val.cols()) = p->val;
      off += p->val.cols();
    }
    auto n = make(std::move(y), parts);
    n->backprop = [parts](Node& self) {
      Eigen::Index off = 0;
      for (const auto& p : parts) {
        if (p->requires_grad) {
          p->ensure_grad();
          p->grad += self.grad.middleCols(off, p->val.cols());
        }
        off += p->val.cols();
      }
    };
    return n;
  }

  /// 0.5 * (a + a[row_perm, col_perm]), both permutations involutions.
  /// Used for the speaker-symmetric readout tying.
  NodePtr symmetrize(NodePtr a, std::vector<Eigen::Index> row_perm,
                     std::vector<Eigen::Index> col_perm) {
    check(static_cast<Eigen::Index>(row_perm.size()) == a->val.rows() &&
              static_cast<Eigen::Index>(col_perm.size()) == a->val.cols(),
          "symmetrize");
    auto rp = std::make_shared<std::vector<Eigen::Index>>(std::move(row_perm));
    auto cp = std::make_shared<std::vector<Eigen::Index>>(std::move(col_perm));
    Mat y(a->val.rows(), a->val.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index j = 0; j < y.cols(); ++j)
        y(i, j) = 0.5 * (a->val(i, j) + a->val((*rp)[static_cast<size_t>(i)],
                                                (*cp)[static_cast<size_t>(j)]));
    auto n = make(std::move(y), {a});
    n->backprop = [a, rp, cp](Node& self) {
      if (!a->requires_grad) return;
      a->ensure_grad();
      for (Eigen::Index i = 0; i < self.grad.rows(); ++i)
        for (Eigen::Index j = 0; j < self.grad.cols(); ++j)
          a->grad(i, j) += 0.5 * (self.grad(i, j) +
                                  self.grad((*rp)[static_cast<size_t>(i)],
                                            (*cp)[static_cast<size_t>(j)]));
    };
    return n;
  }

  /// Mean negative log-probability of the true state over valid frames.
  NodePtr cross_entropy(NodePtr logits, const std::vector<uint8_t>& labels,
                        const std::vector<uint8_t>& valid) {
    const Eigen::Index rows = logits->val.rows();
    check(labels.size() == static_cast<size_t>(rows) && valid.size() == labels.size(),
          "cross_entropy label length");
    size_t n_valid = 0;
    for (auto v : valid) n_valid += (v != 0);
    if (n_valid == 0) throw Error(ErrorCode::EmptyMask, "all frames masked");

    auto probs = std::make_shared<Mat>(rows, logits->val.cols());
    double total = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      double mx = logits->val.row(r).maxCoeff();
      Eigen::RowVectorXd e = (logits->val.row(r).array() - mx).exp();
      double z = e.sum();
      probs->row(r) = e / z;
      if (valid[static_cast<size_t>(r)])
        total -= logits->val(r, labels[static_cast<size_t>(r)]) - mx - std::log(z);
    }
    Mat out(1, 1);
    out(0, 0) = total / static_cast<double>(n_valid);
    auto n = make(std::move(out), {logits});
    auto lab = std::make_shared<std::vector<uint8_t>>(labels);
    auto vld = std::make_shared<std::vector<uint8_t>>(valid);
    n->backprop = [logits, probs, lab, vld, n_valid](Node& self) {
      if (!logits->requires_grad) return;
      logits->ensure_grad();
      double g = self.grad(0, 0) / static_cast<double>(n_valid);
      for (Eigen::Index r = 0; r < logits->val.rows(); ++r) {
        if (!(*vld)[static_cast<size_t>(r)]) continue;
        logits->grad.row(r) += g * probs->row(r);
        logits->grad(r, (*lab)[static_cast<size_t>(r)]) -= g;
      }
    };
    return n;
  }

 private:
  NodePtr make(Mat v, std::vector<NodePtr> parents = {}) {
    auto n = std::make_shared<Node>();
    n->val = std::move(v);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
      if (p->requires_grad) n->requires_grad = true;
    n->order = nodes_.size();
    nodes_.push_back(n);
    return n;
  }

  static void check(bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
  }

  std::vector<NodePtr> nodes_;
  std::vector<std::pair<Param*, NodePtr>> leaves_;
};

/// Sinusoidal positional encoding, frames x dims.
inline Mat positional_encoding(Eigen::Index frames, Eigen::Index dims) {
  Mat pe(frames, dims);
  for (Eigen::Index t = 0; t < frames; ++t)
    for (Eigen::Index d = 0; d < dims; ++d) {
      double angle = static_cast<double>(t) /
                     std::pow(10000.0, 2.0 * static_cast<double>(d / 2) / static_cast<double>(dims));
      pe(t, d) = (d % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

inline Mat softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double mx = logits.row(r).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

}  // namespace mmvap::nn

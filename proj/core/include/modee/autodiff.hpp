#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is a 2-D matrix; scalars are 1x1. The graph is built
// eagerly as operations run and is released when the last Var referencing it
// goes away. Leaf parameters keep their gradient across backward() calls so
// several documents can accumulate into one optimizer step.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace modee::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Node {
  Matrix value;
  Matrix grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this->grad into inputs. Only set on interior nodes that
  // require grad.
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
  template <typename Expr>
  void accumulate_expr(const Expr& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  // Direct access for optimizers and initializers; invalidates nothing.
  Matrix& mutable_value() { return node_->value; }
  // Zero-sized when no gradient has reached this node.
  const Matrix& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0, 0); }

  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Graph recording is on by default. While a guard is alive, results of
/// operations never require grad, so inference builds no backward closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);
Var parameter(Matrix value);

/// Building block for custom operations. The closure receives the output
/// node; it reads node.grad and calls accumulate on node.inputs[k] when that
/// input requires grad.
Var make_result(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn);

/// Reverse sweep from a 1x1 root. Gradients add onto whatever the leaves
/// already hold.
void backward(const Var& root, double seed = 1.0);

Var matmul(const Var& a, const Var& b);
// a * b^T
Var matmul_bt(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// a (n x c) plus a 1 x c row broadcast over rows.
Var add_row(const Var& a, const Var& row);
// Row i of a (n x c) multiplied by col(i, 0) of an n x 1 column.
Var mul_col(const Var& a, const Var& col);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
// Row-wise softmax of a + additive_mask (mask may be empty).
Var softmax_rows(const Var& a, const Matrix& additive_mask = Matrix());
Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
// Row-wise x / max(||x||, eps).
Var l2_normalize_rows(const Var& x, double eps = 1e-12);
Var concat_cols(const Var& a, const Var& b);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Index start, Index width);
Var gather_rows(const Var& a, std::span<const int> rows);
Var sum_all(const Var& a);

/// Sum (or mean) over rows t of -log softmax(logits[t])[targets[t]].
Var cross_entropy(const Var& logits, std::span<const int> targets, bool mean_reduction = false);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

// Plain-matrix helpers shared by inference paths.
Matrix log_softmax_rows(const Matrix& m);

}  // namespace modee::ad

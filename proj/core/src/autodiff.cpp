#include "modee/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "modee/errors.hpp"

namespace modee::ad {

namespace {

thread_local bool g_grad_enabled = true;

void check(bool ok, const char* op, const std::string& what) {
  if (!ok) throw ValueError(std::string(op) + ": " + what);
}

std::string shape(const Var& v) {
  return std::to_string(v.rows()) + "x" + std::to_string(v.cols());
}

void send(Node& self, std::size_t k, const Matrix& g) {
  Node& in = *self.inputs[k];
  if (in.requires_grad) in.accumulate(g);
}

template <typename Expr>
void send_expr(Node& self, std::size_t k, const Expr& g) {
  Node& in = *self.inputs[k];
  if (in.requires_grad) in.accumulate_expr(g);
}

}  // namespace

void Node::accumulate(const Matrix& g) { accumulate_expr(g); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var make_result(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.shared());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

void backward(const Var& root, double seed) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ValueError("backward: root must be 1x1, got " + shape(root));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Constant(1, 1, seed));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && node->grad.size() != 0) node->backward_fn(*node);
  }
  // Interior gradients are not needed after the sweep.
  for (Node* node : order) {
    if (node->backward_fn) node->grad.resize(0, 0);
  }
}

Var matmul(const Var& a, const Var& b) {
  check(a.cols() == b.rows(), "matmul", shape(a) + " * " + shape(b));
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    const Matrix& B = self.inputs[1]->value;
    send_expr(self, 0, self.grad * B.transpose());
    send_expr(self, 1, A.transpose() * self.grad);
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  check(a.cols() == b.cols(), "matmul_bt", shape(a) + " * (" + shape(b) + ")^T");
  Matrix out = a.value() * b.value().transpose();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    const Matrix& B = self.inputs[1]->value;
    send_expr(self, 0, self.grad * B);
    send_expr(self, 1, self.grad.transpose() * A);
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a},
                     [](Node& self) { send_expr(self, 0, self.grad.transpose()); });
}

Var add(const Var& a, const Var& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add", shape(a) + " + " + shape(b));
  Matrix out = a.value() + b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    send(self, 0, self.grad);
    send(self, 1, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub", shape(a) + " - " + shape(b));
  Matrix out = a.value() - b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    send(self, 0, self.grad);
    send_expr(self, 1, -self.grad);
  });
}

Var hadamard(const Var& a, const Var& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", shape(a) + " . " + shape(b));
  Matrix out = a.value().cwiseProduct(b.value());
  return make_result(std::move(out), {a, b}, [](Node& self) {
    send_expr(self, 0, self.grad.cwiseProduct(self.inputs[1]->value));
    send_expr(self, 1, self.grad.cwiseProduct(self.inputs[0]->value));
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  return make_result(std::move(out), {a}, [s](Node& self) { send_expr(self, 0, self.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  check(row.rows() == 1 && row.cols() == a.cols(), "add_row", shape(a) + " + " + shape(row));
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_result(std::move(out), {a, row}, [](Node& self) {
    send(self, 0, self.grad);
    send_expr(self, 1, self.grad.colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& col) {
  check(col.cols() == 1 && col.rows() == a.rows(), "mul_col", shape(a) + " * " + shape(col));
  Matrix out = col.value().col(0).asDiagonal() * a.value();
  return make_result(std::move(out), {a, col}, [](Node& self) {
    const Matrix& A = self.inputs[0]->value;
    const Matrix& C = self.inputs[1]->value;
    send_expr(self, 0, C.col(0).asDiagonal() * self.grad);
    send_expr(self, 1, self.grad.cwiseProduct(A).rowwise().sum());
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_result(std::move(out), {a}, [](Node& self) {
    send_expr(self, 0,
              (self.grad.array() * (1.0 - self.value.array().square())).matrix());
  });
}

Var sigmoid(const Var& a) {
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_result(std::move(out), {a}, [](Node& self) {
    const auto y = self.value.array();
    send_expr(self, 0, (self.grad.array() * y * (1.0 - y)).matrix());
  });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_result(std::move(out), {a}, [](Node& self) {
    const Matrix& x = self.inputs[0]->value;
    send_expr(self, 0, (x.array() > 0.0).select(self.grad, 0.0).matrix());
  });
}

Var softmax_rows(const Var& a, const Matrix& additive_mask) {
  Matrix z = a.value();
  if (additive_mask.size() != 0) {
    check(additive_mask.rows() == z.rows() && additive_mask.cols() == z.cols(), "softmax_rows",
          "mask shape mismatch");
    z += additive_mask;
  }
  for (Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
  return make_result(std::move(z), {a}, [](Node& self) {
    const Matrix& y = self.value;
    Matrix g(y.rows(), y.cols());
    for (Index i = 0; i < y.rows(); ++i) {
      const double dot = self.grad.row(i).dot(y.row(i));
      g.row(i) = y.row(i).cwiseProduct((self.grad.row(i).array() - dot).matrix());
    }
    send(self, 0, g);
  });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
  check(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(),
        "layer_norm_rows", "gain/bias must be 1x" + std::to_string(x.cols()));
  const Matrix& X = x.value();
  const Index n = X.rows();
  const Index d = X.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const double mu = X.row(i).mean();
    const double var = (X.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = ((X.row(i).array() - mu) * inv_std(i)).matrix();
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return make_result(std::move(out), {x, gain, bias},
                     [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                       const Matrix& G = self.grad;
                       const Matrix& gamma = self.inputs[1]->value;
                       if (self.inputs[0]->requires_grad) {
                         Matrix dxhat = (G.array().rowwise() * gamma.row(0).array()).matrix();
                         Matrix dx(G.rows(), G.cols());
                         for (Index i = 0; i < G.rows(); ++i) {
                           const double m1 = dxhat.row(i).mean();
                           const double m2 = dxhat.row(i).dot(xhat.row(i)) / G.cols();
                           dx.row(i) = ((dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) *
                                        inv_std(i))
                                           .matrix();
                         }
                         self.inputs[0]->accumulate(dx);
                       }
                       send_expr(self, 1, G.cwiseProduct(xhat).colwise().sum());
                       send_expr(self, 2, G.colwise().sum());
                     });
}

Var l2_normalize_rows(const Var& x, double eps) {
  const Matrix& X = x.value();
  Eigen::VectorXd norms = X.rowwise().norm();
  Eigen::VectorXd denom = norms.cwiseMax(eps);
  Matrix out = denom.cwiseInverse().asDiagonal() * X;
  return make_result(std::move(out), {x},
                     [norms = std::move(norms), denom = std::move(denom), eps](Node& self) {
                       const Matrix& y = self.value;
                       const Matrix& G = self.grad;
                       Matrix dx(G.rows(), G.cols());
                       for (Index i = 0; i < G.rows(); ++i) {
                         if (norms(i) > eps) {
                           const double dot = y.row(i).dot(G.row(i));
                           dx.row(i) = (G.row(i) - y.row(i) * dot) / denom(i);
                         } else {
                           dx.row(i) = G.row(i) / eps;
                         }
                       }
                       send(self, 0, dx);
                     });
}

Var concat_cols(const Var& a, const Var& b) {
  const Var parts[] = {a, b};
  return concat_cols(std::span<const Var>(parts));
}

Var concat_cols(std::span<const Var> parts) {
  check(!parts.empty(), "concat_cols", "no inputs");
  const Index n = parts[0].rows();
  Index total = 0;
  for (const auto& p : parts) {
    check(p.rows() == n, "concat_cols", "row count mismatch");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<Index> widths;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    widths.push_back(p.cols());
    at += p.cols();
  }
  return make_result(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [widths = std::move(widths)](Node& self) {
                       Index offset = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         send_expr(self, k, self.grad.middleCols(offset, widths[k]));
                         offset += widths[k];
                       }
                     });
}

Var slice_cols(const Var& a, Index start, Index width) {
  check(start >= 0 && width >= 0 && start + width <= a.cols(), "slice_cols", "range out of bounds");
  Matrix out = a.value().middleCols(start, width);
  return make_result(std::move(out), {a}, [start, width](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleCols(start, width) = self.grad;
    in.accumulate(g);
  });
}

Var gather_rows(const Var& a, std::span<const int> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    check(rows[r] >= 0 && rows[r] < a.rows(), "gather_rows", "row index out of range");
    out.row(static_cast<Index>(r)) = a.value().row(rows[r]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return make_result(std::move(out), {a}, [idx = std::move(idx)](Node& self) {
    Node& in = *self.inputs[0];
    if (!in.requires_grad) return;
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) g.row(idx[r]) += self.grad.row(static_cast<Index>(r));
    in.accumulate(g);
  });
}

Var sum_all(const Var& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return make_result(std::move(out), {a}, [](Node& self) {
    Node& in = *self.inputs[0];
    send_expr(self, 0, Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

Matrix log_softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    const double lse = mx + std::log((m.row(i).array() - mx).exp().sum());
    out.row(i) = (m.row(i).array() - lse).matrix();
  }
  return out;
}

Var cross_entropy(const Var& logits, std::span<const int> targets, bool mean_reduction) {
  check(static_cast<Index>(targets.size()) == logits.rows(), "cross_entropy",
        "target length " + std::to_string(targets.size()) + " != logit rows " +
            std::to_string(logits.rows()));
  check(logits.rows() >= 1, "cross_entropy", "empty target sequence");
  Matrix logp = log_softmax_rows(logits.value());
  double loss = 0.0;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    check(targets[t] >= 0 && targets[t] < logits.cols(), "cross_entropy", "target id out of range");
    loss -= logp(static_cast<Index>(t), targets[t]);
  }
  const double norm = mean_reduction ? 1.0 / static_cast<double>(targets.size()) : 1.0;
  std::vector<int> tgt(targets.begin(), targets.end());
  return make_result(Matrix::Constant(1, 1, loss * norm), {logits},
                     [logp = std::move(logp), tgt = std::move(tgt), norm](Node& self) {
                       Node& in = *self.inputs[0];
                       if (!in.requires_grad) return;
                       Matrix g = logp.array().exp().matrix();
                       for (std::size_t t = 0; t < tgt.size(); ++t) g(static_cast<Index>(t), tgt[t]) -= 1.0;
                       in.accumulate(g * (self.grad(0, 0) * norm));
                     });
}

}  // namespace modee::ad

#include <gtest/gtest.h>

#include <functional>
#include <vector>

#include "modee/autodiff.hpp"
#include "modee/errors.hpp"
#include "support.hpp"

namespace modee {
namespace {

using ad::Matrix;
using ad::Var;
using testing::numeric_gradient;
using testing::random_matrix;
using testing::relative_error;

/// Builds loss = sum(op(inputs) .* weights) and compares every input's
/// gradient with central differences.
void check_op(const std::string& label, std::vector<Matrix> inputs,
              const std::function<Var(const std::vector<Var>&)>& op, double tol = 1e-7) {
  std::vector<Var> leaves;
  for (auto& m : inputs) leaves.push_back(ad::parameter(m));
  Rng rng(99);
  const Var probe = op(leaves);
  const Matrix weights = random_matrix(rng, probe.rows(), probe.cols());
  auto loss = [&] { return ad::sum_all(ad::hadamard(op(leaves), ad::constant(weights))); };
  const Var l = loss();
  ad::backward(l);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const Matrix analytic = testing::grad_or_zero(leaves[k]);
    const Matrix numeric = numeric_gradient([&] { return loss().scalar(); }, leaves[k]);
    EXPECT_LT(relative_error(analytic, numeric), tol) << label << " input " << k;
  }
}

TEST(Autodiff, ElementwiseAndLinearOps) {
  Rng rng(1);
  const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 3, 4), c = random_matrix(rng, 4, 2);
  const Matrix row = random_matrix(rng, 1, 4), col = random_matrix(rng, 3, 1);
  check_op("matmul", {a, c}, [](auto& v) { return ad::matmul(v[0], v[1]); });
  check_op("matmul_bt", {a, b}, [](auto& v) { return ad::matmul_bt(v[0], v[1]); });
  check_op("transpose", {a}, [](auto& v) { return ad::transpose(v[0]); });
  check_op("add/sub", {a, b}, [](auto& v) { return (v[0] + v[1]) - ad::scale(v[1], 3.0); });
  check_op("hadamard", {a, b}, [](auto& v) { return ad::hadamard(v[0], v[1]); });
  check_op("add_row", {a, row}, [](auto& v) { return ad::add_row(v[0], v[1]); });
  check_op("mul_col", {a, col}, [](auto& v) { return ad::mul_col(v[0], v[1]); });
  check_op("tanh", {a}, [](auto& v) { return ad::tanh(v[0]); });
  check_op("sigmoid", {a}, [](auto& v) { return ad::sigmoid(v[0]); });
  check_op("relu", {a}, [](auto& v) { return ad::relu(v[0]); });
}

TEST(Autodiff, RowOps) {
  Rng rng(2);
  const Matrix x = random_matrix(rng, 4, 5, 2.0);
  const Matrix gain = random_matrix(rng, 1, 5), bias = random_matrix(rng, 1, 5);
  Matrix mask = Matrix::Zero(4, 5);
  mask(0, 3) = mask(1, 4) = mask(2, 0) = -1e30;
  check_op("softmax_rows", {x}, [](auto& v) { return ad::softmax_rows(v[0]); });
  check_op("softmax_rows masked", {x}, [&](auto& v) { return ad::softmax_rows(v[0], mask); });
  check_op("layer_norm_rows", {x, gain, bias}, [](auto& v) { return ad::layer_norm_rows(v[0], v[1], v[2]); },
           1e-6);
  check_op("l2_normalize_rows", {x}, [](auto& v) { return ad::l2_normalize_rows(v[0]); });
}

TEST(Autodiff, ShapeOps) {
  Rng rng(3);
  const Matrix a = random_matrix(rng, 3, 2), b = random_matrix(rng, 3, 4);
  check_op("concat_cols", {a, b}, [](auto& v) { return ad::concat_cols(v[0], v[1]); });
  check_op("slice_cols", {b}, [](auto& v) { return ad::slice_cols(v[0], 1, 2); });
  const std::vector<int> rows = {2, 0, 2, 1};
  check_op("gather_rows", {b}, [&](auto& v) { return ad::gather_rows(v[0], rows); });
}

TEST(Autodiff, CrossEntropyGradient) {
  Rng rng(4);
  const Matrix logits = random_matrix(rng, 3, 5, 3.0);
  const std::vector<int> gold = {4, 0, 2};
  for (bool mean : {false, true}) {
    Var x = ad::parameter(logits);
    ad::backward(ad::cross_entropy(x, gold, mean));
    const Matrix numeric =
        numeric_gradient([&] { return ad::cross_entropy(x, gold, mean).scalar(); }, x);
    EXPECT_LT(relative_error(x.grad(), numeric), 1e-7);
  }
  EXPECT_THROW(ad::cross_entropy(ad::constant(logits), std::vector<int>{1, 2}), ValueError);
}

TEST(Autodiff, LeafGradientsAccumulateAcrossBackwardCalls) {
  Var w = ad::parameter(Matrix::Constant(1, 1, 2.0));
  ad::backward(ad::scale(w, 3.0));
  ad::backward(ad::scale(w, 3.0), 0.5);
  EXPECT_DOUBLE_EQ(w.grad()(0, 0), 4.5);
  w.zero_grad();
  EXPECT_EQ(w.grad().size(), 0);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  Var w = ad::parameter(Matrix::Constant(2, 2, 1.0));
  {
    ad::NoGradGuard guard;
    EXPECT_FALSE(ad::grad_enabled());
    const Var y = ad::tanh(ad::matmul(w, w));
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(ad::grad_enabled());
  EXPECT_TRUE(ad::tanh(w).requires_grad());
}

TEST(Autodiff, SharedSubexpressionGetsBothContributions) {
  Var x = ad::parameter(Matrix::Constant(1, 1, 3.0));
  const Var y = ad::hadamard(x, x);  // x^2
  ad::backward(ad::add(y, y));       // 2 x^2 -> 4x
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 12.0);
}

}  // namespace
}  // namespace modee

#include <gtest/gtest.h>

#include <cmath>

#include "modee/errors.hpp"
#include "modee/fusion.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace modee {
namespace {

using ad::Matrix;

Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<ad::Index>(v.size()));
  ad::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

TEST(GatingVector, HandExample) {
  const auto alpha = gating_vector(ad::constant(row({1, 0})), ad::constant(row({0, 1})),
                                   ad::constant(Matrix::Identity(2, 2)), ad::constant(Matrix::Identity(2, 2)),
                                   ad::constant(Matrix::Ones(2, 1)));
  const double expected = 1.0 / (1.0 + std::exp(-2.0 * std::tanh(1.0)));
  EXPECT_NEAR(alpha.scalar(), expected, 1e-12);
  EXPECT_NEAR(alpha.scalar(), 0.8210, 1e-4);
}

TEST(GatingVector, NegatedProjectionsGiveOneHalf) {
  Rng rng(1);
  GatedFusion fusion(5, FusionConfig{}, 1);
  fusion.graph_projection().mutable_value() = -fusion.text_projection().value();
  const auto h = ad::constant(testing::random_matrix(rng, 7, 5, 3.0));
  const Matrix alpha = fusion.gating_vector(h, h).value();
  EXPECT_TRUE((alpha.array() == 0.5).all());
}

TEST(GatingVector, StrictlyInsideUnitInterval) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    GatedFusion fusion(4, FusionConfig{}, static_cast<std::uint64_t>(trial));
    const Matrix alpha = fusion.gating_vector(ad::constant(testing::random_matrix(rng, 6, 4, 4.0)),
                                              ad::constant(testing::random_matrix(rng, 6, 4, 4.0)))
                             .value();
    EXPECT_GT(alpha.minCoeff(), 0.0);
    EXPECT_LT(alpha.maxCoeff(), 1.0);
  }
}

TEST(Integrate, RowScalingLaw) {
  Rng rng(3);
  GatedFusion fusion(6, FusionConfig{}, 3);
  const auto ht = ad::constant(testing::random_matrix(rng, 5, 6));
  const auto hg = ad::constant(testing::random_matrix(rng, 5, 6));
  const Matrix alpha = fusion.gating_vector(ht, hg).value();
  const Matrix out = fusion.fuse(ht, hg).value();
  for (ad::Index i = 0; i < 5; ++i) {
    EXPECT_TRUE((out.row(i).array() == (alpha(i, 0) * ht.value().row(i)).array()).all());
    EXPECT_NEAR(out.row(i).norm(), alpha(i, 0) * ht.value().row(i).norm(), 1e-15);
  }
}

TEST(Integrate, Examples) {
  EXPECT_EQ(integrate(ad::constant(row({2, -4})), ad::constant(row({0.5}))).value(), row({1, -2}));
  const Matrix h = Matrix::Constant(3, 2, 1.5);
  EXPECT_EQ(integrate(ad::constant(h), ad::constant(Matrix::Ones(3, 1))).value(), h);
  EXPECT_EQ(integrate(ad::constant(h), ad::constant(Matrix::Zero(3, 1))).value(), Matrix::Zero(3, 2));
  EXPECT_THROW(integrate(ad::constant(h), ad::constant(Matrix::Ones(2, 1))), ValueError);
}

TEST(FuseAdditive, Examples) {
  Matrix b(1, 2);
  b << 3, -2;
  EXPECT_EQ(fuse_additive(ad::constant(row({1, 2})), ad::constant(b)).value(), row({4, 0}));
  Rng rng(4);
  const Matrix x = testing::random_matrix(rng, 3, 3), y = testing::random_matrix(rng, 3, 3);
  EXPECT_EQ(fuse_additive(ad::constant(x), ad::constant(y)).value(),
            fuse_additive(ad::constant(y), ad::constant(x)).value());
  EXPECT_EQ(fuse_additive(ad::constant(x), ad::constant(Matrix::Zero(3, 3))).value(), x);
  EXPECT_THROW(fuse_additive(ad::constant(x), ad::constant(Matrix::Zero(2, 3))), ValueError);
}

TEST(GatedFusion, ShapeErrors) {
  GatedFusion fusion(4, FusionConfig{}, 5);
  EXPECT_THROW(fusion.gating_vector(ad::constant(Matrix::Zero(3, 4)), ad::constant(Matrix::Zero(2, 4))),
               ValueError);
  EXPECT_THROW(fusion.gating_vector(ad::constant(Matrix::Zero(3, 3)), ad::constant(Matrix::Zero(3, 3))),
               ValueError);
}

TEST(GatedFusion, GraphReachesOutputOnlyThroughGate) {
  Rng rng(6);
  GatedFusion fusion(4, FusionConfig{}, 6);
  const Matrix text = testing::random_matrix(rng, 3, 4);
  const auto ht = ad::constant(text);
  const auto g1 = ad::constant(testing::random_matrix(rng, 3, 4));
  const auto g2 = ad::constant(testing::random_matrix(rng, 3, 4));
  const Matrix a1 = fusion.gating_vector(ht, g1).value();
  const Matrix a2 = fusion.gating_vector(ht, g2).value();
  EXPECT_GT((a1 - a2).norm(), 1e-9);
  EXPECT_EQ(ht.value(), text);
  EXPECT_EQ(fusion.fuse(ht, g2).value(), integrate(ht, ad::constant(a2)).value());
}

TEST(GatedFusion, GradientsMatchFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) EXPECT_LT(testing::fusion_gradient_trial(rng), 1e-6);
}

TEST(GatedFusion, ParametersAreBiasFreeByDefault) {
  GatedFusion fusion(3, FusionConfig{}, 8);
  EXPECT_EQ(fusion.parameters().size(), 3u);
  GatedFusion with_bias(3, FusionConfig{.projection_bias = true}, 8);
  EXPECT_EQ(with_bias.parameters().size(), 5u);
}

}  // namespace
}  // namespace modee

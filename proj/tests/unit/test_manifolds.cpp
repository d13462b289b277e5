#include "vaelab/manifolds.hpp"

#include <gtest/gtest.h>

using namespace vaelab;

namespace {

GeneratorConfig small_config(std::uint64_t seed) {
  GeneratorConfig g;
  g.kappa = 2;
  g.hidden1 = 16;
  g.hidden2 = 16;
  g.d = 10;
  g.n = 300;
  g.seed = seed;
  return g;
}

}  // namespace

TEST(GenGroundTruth, ShapesAndGeneratorConsistency) {
  const GroundTruth gt = gen_ground_truth(small_config(1));
  EXPECT_EQ(gt.z.rows(), 2);
  EXPECT_EQ(gt.z.cols(), 300);
  EXPECT_EQ(gt.l.rows(), 10);
  EXPECT_EQ(gt.l.cols(), 300);
  EXPECT_LT((gt.l - predict(gt.generator, gt.z.transpose()).transpose()).norm(), 1e-12);
  EXPECT_TRUE(gt.low_rank.passed);
  EXPECT_EQ(gt.low_rank.rank, 4);
  EXPECT_GT(low_rank_residual(gt.l, gt.low_rank.rank), 0.05);
}

TEST(GenGroundTruth, IsDeterministic) {
  const GroundTruth a = gen_ground_truth(small_config(2));
  const GroundTruth b = gen_ground_truth(small_config(2));
  EXPECT_EQ(a.l, b.l);
  EXPECT_NE(a.l, gen_ground_truth(small_config(3)).l);
}

TEST(GenGroundTruth, RejectsBadKappa) {
  GeneratorConfig g = small_config(0);
  g.kappa = 10;
  EXPECT_THROW(gen_ground_truth(g), std::invalid_argument);
}

TEST(GenGroundTruth, ImpossibleCheckThrowsWithResiduals) {
  GeneratorConfig g = small_config(0);
  g.check_threshold = 2.0;  // relative residual never exceeds 1
  g.max_reseeds = 2;
  EXPECT_THROW(gen_ground_truth(g), NumericError);
}

TEST(LowRankResidual, Oracle) {
  DenseMatrix m = DenseMatrix::Zero(3, 3);
  m(0, 0) = 3.0;
  m(1, 1) = 4.0;
  EXPECT_NEAR(low_rank_residual(m, 1), 3.0 / 5.0, 1e-12);
  EXPECT_NEAR(low_rank_residual(m, 2), 0.0, 1e-12);
}

TEST(FitInverseEncoder, ReducesError) {
  GroundTruth gt = gen_ground_truth(small_config(4));
  const double before = gt.inverse_error;
  InverseFitConfig cfg;
  cfg.max_epochs = 60;
  cfg.batch_size = 50;
  fit_inverse_encoder(gt, cfg);
  EXPECT_LT(gt.inverse_error, 0.5 * before);
  EXPECT_NEAR(gt.inverse_error, inverse_mse(gt.generator, gt.inverse, gt.z), 1e-12);
  EXPECT_GT(gt.inverse_heldout_error, 0.0);
}

TEST(Corrupt, ReplacesFractionNu) {
  const DenseMatrix l = sample_gaussian(RngStream(5, "l"), 50, 200);
  const CorruptedData c = corrupt(l, 0.2, CorruptionMode::gaussian_unit, 5);
  const double frac = static_cast<double>(c.mask.count()) / static_cast<double>(l.size());
  EXPECT_NEAR(frac, 0.2, 0.01);
  EXPECT_LT((c.s_true - (c.x - l)).norm(), 1e-15);
  for (Index i = 0; i < l.rows(); ++i)
    for (Index j = 0; j < l.cols(); ++j)
      if (!c.mask(i, j)) {
        EXPECT_EQ(c.x(i, j), l(i, j));
      }
}

TEST(Corrupt, UniformDrawsInUnitInterval) {
  const DenseMatrix l = DenseMatrix::Constant(20, 20, 5.0);
  const CorruptedData c = corrupt(l, 1.0, CorruptionMode::uniform_0_1, 6);
  EXPECT_EQ(c.mask.count(), 400);
  EXPECT_GE(c.x.minCoeff(), 0.0);
  EXPECT_LT(c.x.maxCoeff(), 1.0);
}

TEST(Corrupt, ZeroNuIsIdentityAndBadNuThrows) {
  const DenseMatrix l = sample_gaussian(RngStream(7, "l"), 5, 5);
  EXPECT_EQ(corrupt(l, 0.0, CorruptionMode::gaussian_unit, 7).x, l);
  EXPECT_THROW(corrupt(l, 1.5, CorruptionMode::gaussian_unit, 7), std::invalid_argument);
}

TEST(Corrupt, DeterministicPerSeed) {
  const DenseMatrix l = sample_gaussian(RngStream(8, "l"), 5, 5);
  EXPECT_EQ(corrupt(l, 0.3, CorruptionMode::gaussian_unit, 8).x, corrupt(l, 0.3, CorruptionMode::gaussian_unit, 8).x);
}

TEST(Nmse, Oracle) {
  DenseMatrix l(1, 2), h(1, 2);
  l << 3.0, 4.0;
  h << 3.0, 3.0;
  EXPECT_DOUBLE_EQ(nmse(l, h), 1.0 / 25.0);
  EXPECT_THROW(nmse(DenseMatrix::Zero(1, 2), h), std::invalid_argument);
}

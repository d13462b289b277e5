#include "vaelab/numkit.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vaelab;

namespace {

// Largest singular value by power iteration on M^T M.
double power_iteration_norm(const DenseMatrix& m) {
  Vector v = Vector::Ones(m.cols()).normalized();
  double sigma = 0.0;
  for (int it = 0; it < 5000; ++it) {
    Vector w = m.transpose() * (m * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    sigma = std::sqrt(norm);
  }
  return sigma;
}

}  // namespace

TEST(Svd, ReconstructsAndOrdersSingularValues) {
  const DenseMatrix m = sample_gaussian(RngStream(11, "svd"), 7, 5);
  const SvdResult r = svd(m);
  EXPECT_LT((r.u * r.s.asDiagonal() * r.v.transpose() - m).norm(), 1e-12);
  for (Index i = 1; i < r.s.size(); ++i) EXPECT_GE(r.s(i - 1), r.s(i));
  EXPECT_LT((r.u.transpose() * r.u - DenseMatrix::Identity(5, 5)).norm(), 1e-12);
  EXPECT_LT((r.v.transpose() * r.v - DenseMatrix::Identity(5, 5)).norm(), 1e-12);
}

TEST(Svd, SignConventionMakesLargestEntryNonnegative) {
  const DenseMatrix m = sample_gaussian(RngStream(12, "svd"), 4, 6);
  const SvdResult a = svd(m);
  const SvdResult b = svd(-m);
  for (Index j = 0; j < a.u.cols(); ++j) {
    Index at = 0;
    a.u.col(j).cwiseAbs().maxCoeff(&at);
    EXPECT_GE(a.u(at, j), 0.0);
  }
  // Negating M flips V and leaves U fixed under the convention.
  EXPECT_LT((a.u - b.u).norm(), 1e-10);
  EXPECT_LT((a.v + b.v).norm(), 1e-10);
}

TEST(SoftThreshold, ScalarValues) {
  EXPECT_DOUBLE_EQ(soft_threshold(3.0, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-3.0, 1.0), -2.0);
  EXPECT_DOUBLE_EQ(soft_threshold(0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(soft_threshold(-1.0, 1.0), 0.0);
}

TEST(SoftThreshold, MatrixIsElementwise) {
  DenseMatrix m(2, 2);
  m << 2.0, -0.1, -4.0, 0.3;
  DenseMatrix expected(2, 2);
  expected << 1.5, 0.0, -3.5, 0.0;
  EXPECT_EQ(soft_threshold(m, 0.5), expected);
}

TEST(SvShrink, ShrinksSingularValues) {
  const DenseMatrix q1 = sample_gaussian(RngStream(13, "q"), 5, 5).householderQr().householderQ();
  const DenseMatrix q2 = sample_gaussian(RngStream(14, "q"), 4, 4).householderQr().householderQ();
  DenseMatrix s = DenseMatrix::Zero(5, 4);
  s(0, 0) = 5.0;
  s(1, 1) = 3.0;
  s(2, 2) = 1.0;
  DenseMatrix shrunk_s = DenseMatrix::Zero(5, 4);
  shrunk_s(0, 0) = 3.0;
  shrunk_s(1, 1) = 1.0;
  const DenseMatrix m = q1 * s * q2.transpose();
  EXPECT_LT((sv_shrink(m, 2.0) - q1 * shrunk_s * q2.transpose()).norm(), 1e-12);
}

TEST(SpectralNorm, MatchesPowerIteration) {
  const DenseMatrix m = sample_gaussian(RngStream(15, "norm"), 9, 6);
  EXPECT_NEAR(spectral_norm(m), power_iteration_norm(m), 1e-9);
}

TEST(AllFinite, DetectsNanAndInf) {
  DenseMatrix m = DenseMatrix::Ones(2, 2);
  EXPECT_TRUE(all_finite(m));
  m(1, 0) = std::nan("");
  EXPECT_FALSE(all_finite(m));
  Vector v = Vector::Ones(3);
  v(2) = INFINITY;
  EXPECT_FALSE(all_finite(v));
}

TEST(RngStream, SameIdentitySameDraws) {
  const RngStream a(5, "label");
  const RngStream b(5, "label");
  EXPECT_EQ(a.key(), b.key());
  EXPECT_EQ(sample_gaussian(a, 3, 3), sample_gaussian(b, 3, 3));
}

TEST(RngStream, DifferentIdentitiesDiffer) {
  EXPECT_NE(RngStream(5, "a").key(), RngStream(5, "b").key());
  EXPECT_NE(RngStream(5, "a").key(), RngStream(6, "a").key());
  EXPECT_NE(sample_gaussian(RngStream(5, "a"), 3, 3), sample_gaussian(RngStream(5, "b"), 3, 3));
}

TEST(RngStream, ChildLabelIsNested) {
  const RngStream child = RngStream(9, "root").child("leaf");
  EXPECT_EQ(child.label(), "root/leaf");
  EXPECT_EQ(child, RngStream(9, "root/leaf"));
}

TEST(SampleGaussian, MomentsAreStandard) {
  const DenseMatrix z = sample_gaussian(RngStream(16, "moments"), 200, 500);
  const double mean = z.mean();
  const double var = (z.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.02);
}

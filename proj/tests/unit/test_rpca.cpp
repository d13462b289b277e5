#include "vaelab/rpca.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vaelab;

TEST(RpcaAlm, RecoversLowRankPlusSparse) {
  const DenseMatrix l0 = sample_gaussian(RngStream(1, "u"), 40, 2) * sample_gaussian(RngStream(1, "v"), 2, 40);
  DenseMatrix s0 = DenseMatrix::Zero(40, 40);
  auto eng = RngStream(1, "s").engine();
  std::bernoulli_distribution coin(0.05);
  for (Index i = 0; i < 40; ++i)
    for (Index j = 0; j < 40; ++j)
      if (coin(eng)) s0(i, j) = (j % 2 == 0) ? 5.0 : -5.0;
  const Decomposition dec = rpca_alm(l0 + s0);
  EXPECT_TRUE(dec.converged);
  EXPECT_LT((dec.l - l0).norm() / l0.norm(), 1e-3);
  EXPECT_LT((dec.l + dec.s - l0 - s0).norm(), 1e-5 * (l0 + s0).norm());
}

TEST(RpcaAlm, ZeroMatrixIsTrivial) {
  const Decomposition dec = rpca_alm(DenseMatrix::Zero(4, 3));
  EXPECT_EQ(dec.l.norm(), 0.0);
  EXPECT_EQ(dec.s.norm(), 0.0);
}

TEST(RpcaAlm, IterationCapReportsNotConverged) {
  const DenseMatrix x = sample_gaussian(RngStream(2, "x"), 10, 10);
  RpcaOptions opts;
  opts.max_iterations = 2;
  const Decomposition dec = rpca_alm(x, opts);
  EXPECT_FALSE(dec.converged);
  EXPECT_EQ(dec.iterations, 2);
}

TEST(Counting, RankAndNonzeros) {
  DenseMatrix l = DenseMatrix::Zero(3, 3);
  l(0, 0) = 1.0;
  l(1, 1) = 1e-12;
  EXPECT_EQ(numerical_rank(l), 1);
  EXPECT_EQ(numerical_rank(DenseMatrix::Zero(2, 2)), 0);
  DenseMatrix s = DenseMatrix::Zero(3, 3);
  s(0, 1) = 1e-13;
  s(1, 0) = -2.0;
  EXPECT_EQ(count_nonzeros(s), 1);
  EXPECT_DOUBLE_EQ(l0_objective(l, s, 3), 3.0 * 1 + 1);
}

TEST(RoundDecomposition, DropsTinyEntries) {
  Decomposition dec;
  dec.l = DenseMatrix::Identity(2, 2);
  dec.l(1, 1) = 1e-9;
  dec.s = DenseMatrix::Zero(2, 2);
  dec.s(0, 1) = 1e-8;
  dec.s(1, 0) = 0.5;
  const Decomposition r = round_decomposition(dec);
  EXPECT_EQ(numerical_rank(r.l), 1);
  EXPECT_EQ(count_nonzeros(r.s), 1);
}

TEST(L0Bruteforce, TwoByTwoExampleHasFourOptima) {
  // det = 3, so rank 1 needs one outlier; editing any single entry works.
  DenseMatrix x(2, 2);
  x << 1.0, 1.0, 1.0, 4.0;
  const L0Result r = l0_bruteforce(x, 2);
  EXPECT_DOUBLE_EQ(r.objective, 3.0);
  EXPECT_EQ(r.rank, 1);
  EXPECT_EQ(r.support_size, 1);
  EXPECT_FALSE(r.unique);
  EXPECT_LT((r.best.l + r.best.s - x).norm(), 1e-8);
}

TEST(L0Bruteforce, RankOneMatrixIsUniqueWithEmptySupport) {
  DenseMatrix x(2, 3);
  x << 1.0, 2.0, 3.0, 2.0, 4.0, 6.0;
  const L0Result r = l0_bruteforce(x, 2);
  EXPECT_DOUBLE_EQ(r.objective, 3.0);
  EXPECT_EQ(r.support_size, 0);
  EXPECT_TRUE(r.unique);
}

TEST(L0Bruteforce, SparseMatrixPrefersOutliers) {
  // One spike: rank 0 + 1 outlier beats rank 1 (cost n = 3).
  DenseMatrix x = DenseMatrix::Zero(3, 3);
  x(1, 2) = 7.0;
  const L0Result r = l0_bruteforce(x, 2);
  EXPECT_DOUBLE_EQ(r.objective, 1.0);
  EXPECT_EQ(r.rank, 0);
}

TEST(L0Bruteforce, RefusesLargeInputs) {
  EXPECT_THROW(l0_bruteforce(DenseMatrix::Ones(5, 5), 1), std::invalid_argument);
}

TEST(L0Bruteforce, AlmNeverBeatsOracle) {
  auto eng = RngStream(3, "inst").engine();
  for (int t = 0; t < 10; ++t) {
    const Index d = 2 + t % 2;
    const DenseMatrix x = sample_gaussian(eng, d, d);
    const L0Result oracle = l0_bruteforce(x, d);
    const Decomposition alm = round_decomposition(rpca_alm(x));
    EXPECT_GE(l0_objective(alm.l, alm.s, d), oracle.objective);
  }
}

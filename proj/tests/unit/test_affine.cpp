#include "vaelab/affine.hpp"

#include <gtest/gtest.h>

#include <Eigen/LU>
#include <algorithm>
#include <cmath>

using namespace vaelab;

namespace {

// Objective through an explicit inverse and LU determinant.
double naive_objective(const DenseMatrix& w, const Vector& b, double lambda, const DenseMatrix& x) {
  const DenseMatrix c = lambda * DenseMatrix::Identity(w.rows(), w.rows()) + w * w.transpose();
  const DenseMatrix inv = c.inverse();
  double total = 0.0;
  for (Index i = 0; i < x.cols(); ++i) {
    const Vector r = x.col(i) - b;
    total += r.dot(inv * r);
  }
  return total + static_cast<double>(x.cols()) * std::log(c.determinant());
}

double naive_separable(const DenseMatrix& w, const Vector& b, double lambda, const DenseMatrix& x) {
  const double n = static_cast<double>(x.cols());
  const DenseMatrix c = lambda * DenseMatrix::Identity(w.rows(), w.rows()) + w * w.transpose();
  double logs = 0.0;
  for (Index j = 0; j < w.cols(); ++j) logs += std::log(lambda + w.col(j).squaredNorm());
  logs += static_cast<double>(w.rows() - w.cols()) * std::log(lambda);
  return naive_objective(w, b, lambda, x) - n * std::log(c.determinant()) + n * logs;
}

struct Data {
  DenseMatrix x;
  Vector b;
};

Data synthetic(std::uint64_t seed, Index d, Index rank, Index n) {
  const DenseMatrix a = sample_gaussian(RngStream(seed, "a"), d, rank);
  DenseMatrix x = a * sample_gaussian(RngStream(seed, "z"), rank, n) +
                  0.3 * sample_gaussian(RngStream(seed, "noise"), d, n);
  x.colwise() += Vector::LinSpaced(d, -1.0, 1.0);
  return {x, sample_mean(x)};
}

}  // namespace

TEST(PpcaObjective, MatchesNaiveInverse) {
  const Data data = synthetic(1, 6, 2, 40);
  const DenseMatrix w = sample_gaussian(RngStream(1, "w"), 6, 3);
  const AffineModel m{w, data.b, 0.7};
  EXPECT_NEAR(ppca_objective(m, data.x), naive_objective(w, data.b, 0.7, data.x), 1e-9);
  EXPECT_NEAR(ppca_objective_sep(m, data.x), naive_separable(w, data.b, 0.7, data.x), 1e-9);
}

TEST(PpcaObjective, SeparableIsUpperBound) {
  // Hadamard: the separable log term dominates the log determinant.
  const Data data = synthetic(2, 5, 2, 30);
  for (int t = 0; t < 20; ++t) {
    const DenseMatrix w = sample_gaussian(RngStream(2, "w" + std::to_string(t)), 5, 3);
    const AffineModel m{w, data.b, 0.5};
    EXPECT_GE(ppca_objective_sep(m, data.x) - ppca_objective(m, data.x), -1e-9);
  }
}

TEST(SampleStatistics, CovarianceOracle) {
  const Data data = synthetic(3, 4, 2, 25);
  DenseMatrix expected = DenseMatrix::Zero(4, 4);
  for (Index i = 0; i < 25; ++i) {
    const Vector r = data.x.col(i) - data.b;
    expected += r * r.transpose();
  }
  expected /= 25.0;
  EXPECT_LT((sample_covariance(data.x, data.b) - expected).norm(), 1e-12);
  EXPECT_LT((sample_mean(data.x) - data.x.rowwise().mean()).norm(), 1e-12);
}

TEST(PpcaGradient, MatchesFiniteDifferences) {
  const Data data = synthetic(4, 5, 2, 30);
  const DenseMatrix w = sample_gaussian(RngStream(4, "w"), 5, 3);
  const double h = 1e-6;
  for (auto form : {PpcaForm::joint, PpcaForm::separable}) {
    const DenseMatrix g = ppca_gradient(AffineModel{w, data.b, 0.8}, data.x, form);
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) {
        DenseMatrix wp = w, wm = w;
        wp(i, j) += h;
        wm(i, j) -= h;
        auto f = [&](const DenseMatrix& ww) {
          return form == PpcaForm::joint ? naive_objective(ww, data.b, 0.8, data.x)
                                         : naive_separable(ww, data.b, 0.8, data.x);
        };
        const double num = (f(wp) - f(wm)) / (2 * h);
        EXPECT_NEAR(g(i, j), num, 1e-5 * std::max(1.0, std::abs(num)));
      }
    }
  }
}

TEST(PpcaOptimalW, IsStationaryAndBeatsRandomStarts) {
  const Data data = synthetic(5, 6, 2, 200);
  const double lambda = 0.1;
  const DenseMatrix w = ppca_optimal_w(data.x, data.b, lambda, 3);
  const AffineModel opt{w, data.b, lambda};
  EXPECT_LT(ppca_gradient(opt, data.x, PpcaForm::joint).norm(), 1e-8 * 200);
  const double best = ppca_objective(opt, data.x);
  for (int t = 0; t < 10; ++t) {
    const DenseMatrix r = sample_gaussian(RngStream(5, "r" + std::to_string(t)), 6, 3);
    EXPECT_GT(ppca_objective(AffineModel{r, data.b, lambda}, data.x), best);
  }
}

TEST(PpcaOptimalW, ColumnsAreOrthogonal) {
  const Data data = synthetic(6, 6, 3, 100);
  const DenseMatrix w = ppca_optimal_w(data.x, data.b, 0.05, 3);
  const DenseMatrix g = w.transpose() * w;
  EXPECT_LT((g - DenseMatrix(g.diagonal().asDiagonal())).norm(), 1e-9);
}

TEST(MinimizePpca, ReachesClosedForm) {
  const Data data = synthetic(7, 5, 2, 100);
  const double lambda = 0.2;
  const double best = ppca_objective(AffineModel{ppca_optimal_w(data.x, data.b, lambda, 2), data.b, lambda}, data.x);
  const DenseMatrix w0 = sample_gaussian(RngStream(7, "w0"), 5, 2);
  const MinimizeResult r = minimize_ppca(data.x, data.b, lambda, w0, PpcaForm::joint);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(std::abs(r.objective - best) / std::abs(best), 1e-8);
}

TEST(PpcaPosterior, CostAtPosteriorEqualsObjectivePlusConstant) {
  const Data data = synthetic(8, 6, 2, 50);
  const AffineModel m{sample_gaussian(RngStream(8, "w"), 6, 3), data.b, 0.4};
  const AffinePosterior p = ppca_posterior(m, data.x);
  const double cost = affine_vae_cost(m, data.x, p.mean, p.cov);
  EXPECT_NEAR(cost, ppca_objective(m, data.x) + 50.0 * 3.0, 1e-8 * std::abs(cost));
  // Any other posterior costs more.
  const DenseMatrix shifted = p.mean + 0.01 * DenseMatrix::Ones(3, 50);
  EXPECT_GT(affine_vae_cost(m, data.x, shifted, p.cov), cost);
  EXPECT_GT(affine_vae_cost(m, data.x, p.mean, 1.1 * p.cov), cost);
}

TEST(PpcaPosterior, MeanAndCovarianceOracle) {
  const Data data = synthetic(9, 4, 2, 10);
  const DenseMatrix w = sample_gaussian(RngStream(9, "w"), 4, 2);
  const double lambda = 0.3;
  const AffinePosterior p = ppca_posterior(AffineModel{w, data.b, lambda}, data.x);
  const DenseMatrix c = lambda * DenseMatrix::Identity(4, 4) + w * w.transpose();
  DenseMatrix centered = data.x;
  centered.colwise() -= data.b;
  EXPECT_LT((p.mean - w.transpose() * c.inverse() * centered).norm(), 1e-10);
  EXPECT_LT((p.cov - (w.transpose() * w / lambda + DenseMatrix::Identity(2, 2)).inverse()).norm(), 1e-12);
}

TEST(HadamardGap, NonnegativeAndZeroForOrthogonalColumns) {
  auto eng = RngStream(10, "gap").engine();
  for (int t = 0; t < 200; ++t) {
    const DenseMatrix w = sample_gaussian(eng, 5, 3);
    const double lambda = std::exp(std::uniform_real_distribution<double>(-5, 2)(eng));
    const double gap = hadamard_gap(w, lambda);
    EXPECT_GE(gap, -1e-10);
    const DenseMatrix c = lambda * DenseMatrix::Identity(5, 5) + w * w.transpose();
    double logs = 2.0 * std::log(lambda);
    for (Index j = 0; j < 3; ++j) logs += std::log(lambda + w.col(j).squaredNorm());
    EXPECT_NEAR(gap, logs - std::log(c.determinant()), 1e-8);
  }
  DenseMatrix q = sample_gaussian(eng, 5, 3).householderQr().householderQ() * DenseMatrix::Identity(5, 3);
  q.col(1) *= 3.0;
  EXPECT_NEAR(hadamard_gap(q, 0.2), 0.0, 1e-12);
}

TEST(RandomRotation, IsOrthogonal) {
  auto eng = RngStream(11, "rot").engine();
  const DenseMatrix r = random_rotation(4, eng);
  EXPECT_LT((r.transpose() * r - DenseMatrix::Identity(4, 4)).norm(), 1e-12);
}

TEST(CountSignificantColumns, RelativeThreshold) {
  DenseMatrix w = DenseMatrix::Zero(3, 4);
  w(0, 0) = 1.0;
  w(1, 1) = 1e-3;
  w(2, 2) = 1e-8;
  EXPECT_EQ(count_significant_columns(w), 2);
  EXPECT_EQ(count_significant_columns(DenseMatrix::Zero(3, 4)), 0);
}

TEST(AffineSymmetryReport, PassesOnSeparableMinimizer) {
  const Data data = synthetic(12, 6, 2, 200);
  const double lambda = 0.05;
  const DenseMatrix w0 = sample_gaussian(RngStream(12, "w0"), 6, 4);
  const MinimizeResult r = minimize_ppca(data.x, data.b, lambda, w0, PpcaForm::separable);
  const SymmetryReport rep = affine_symmetry_report(data.x, r.w, data.b, lambda, 5, RngStream(12, "sym"));
  EXPECT_TRUE(rep.rotation_invariant);
  EXPECT_TRUE(rep.permutation_invariant);
  EXPECT_LE(rep.separable_nonzero_columns, rep.joint_rank);
}

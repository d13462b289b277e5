#include "vaelab/probes.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

using namespace vaelab;

namespace {

double bound_oracle(const DenseMatrix& x, const Vector& a, double alpha) {
  const Index n = x.cols(), d = x.rows();
  double eta = 0.0;
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      eta = std::max(eta, (x.col(i) - x.col(j)).squaredNorm());
      gap = std::min(gap, std::abs(a.dot(x.col(i)) - a.dot(x.col(j))));
    }
  }
  const double rho = gap / 2.0;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double p = a.dot(x.col(i));
    total += eta / (rho * rho) + (d - 1) * std::log(alpha) + alpha + p * p;
  }
  return total;
}

}  // namespace

TEST(CountNonzeroColumns, ThresholdIsInclusive) {
  DenseMatrix w = DenseMatrix::Zero(2, 4);
  w(0, 0) = 1.0;
  w(1, 1) = 0.05;
  w(0, 2) = 0.049;
  const PruneReport r = count_nonzero_columns(w);
  EXPECT_EQ(r.nonzero, 2);
  EXPECT_DOUBLE_EQ(r.threshold, 0.05);
  EXPECT_EQ(r.sorted_norms, (std::vector<double>{1.0, 0.05, 0.049, 0.0}));
  EXPECT_FALSE(r.degenerate);
}

TEST(CountNonzeroColumns, AllZeroIsDegenerate) {
  const PruneReport r = count_nonzero_columns(DenseMatrix::Zero(3, 3));
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.nonzero, 0);
}

TEST(SuppAlpha, StrictInequality) {
  Vector v(4);
  v << 0.5, -2.0, 0.1, 0.0;
  EXPECT_EQ(supp_alpha(v, 0.1), (std::vector<Index>{0, 1}));
  EXPECT_EQ(supp_alpha(v, 0.0), (std::vector<Index>{0, 1, 2}));
}

TEST(LogHistogram, CountsEveryValue) {
  const std::vector<double> values{1e-10, 1e-3, 0.5, 0.5, 100.0};
  const Histogram h = log_histogram(values, 1e-8, 10.0, 9);
  ASSERT_EQ(h.edges.size(), 10u);
  EXPECT_NEAR(h.edges.front(), 1e-8, 1e-20);
  EXPECT_NEAR(h.edges.back(), 10.0, 1e-12);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), std::int64_t{0}), 5);
  EXPECT_EQ(h.counts.front(), 1);
  EXPECT_EQ(h.counts[5], 1);    // [1e-3, 1e-2)
  EXPECT_EQ(h.counts[7], 2);    // [0.1, 1)
  EXPECT_EQ(h.counts.back(), 1);  // 100 clamps into the top bin
}

TEST(SigmaZStats, FractionsFromVariances) {
  DenseMatrix var(2, 5);
  var << 0.01, 0.02, 0.5, 0.95, 0.05,  //
      1.0, 0.99, 0.3, 0.92, 0.85;
  const SigmaZReport r = sigma_z_stats_from_variances(var);
  EXPECT_EQ(r.entries, 10);
  EXPECT_DOUBLE_EQ(r.fraction_below_01, 0.3);
  EXPECT_DOUBLE_EQ(r.fraction_above_09, 0.4);
  EXPECT_DOUBLE_EQ(r.fraction_mid_band, 0.2);
  ASSERT_EQ(r.sorted_means.size(), 2u);
  EXPECT_NEAR(r.sorted_means[0], (0.01 + 0.02 + 0.5 + 0.95 + 0.05) / 5, 1e-15);
}

TEST(SupportRecovery, PerfectAndMissed) {
  DenseMatrix s = DenseMatrix::Zero(3, 2);
  s(1, 0) = 2.0;
  DenseMatrix residual = s;
  SupportRecovery r = support_recovery(residual, s, 1e-3);
  EXPECT_DOUBLE_EQ(r.mean_precision, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_recall, 1.0);
  residual(1, 0) = 0.0;
  residual(2, 0) = 1.0;
  r = support_recovery(residual, s, 1e-3);
  EXPECT_DOUBLE_EQ(r.precision[0], 0.0);
  EXPECT_DOUBLE_EQ(r.recall[0], 0.0);
  EXPECT_DOUBLE_EQ(r.recall[1], 1.0);
}

TEST(ExactDecomposition, SatisfiesConstruction) {
  const ExactDecomposition dec = make_exact_decomposition(12, 3, 40, 0.1, 1);
  EXPECT_LT((dec.x - dec.psi * dec.pi - dec.s).norm(), 1e-12);
  for (Index i = 0; i < 40; ++i)
    for (Index j = i + 1; j < 40; ++j) EXPECT_GE((dec.pi.col(i) - dec.pi.col(j)).norm(), 2.0);
  for (Index k = 0; k < dec.s.size(); ++k) {
    const double v = std::abs(dec.s.data()[k]);
    EXPECT_TRUE(v == 0.0 || (v >= 1.0 && v <= 2.0));
  }
  const double frac = static_cast<double>((dec.s.array() != 0.0).count()) / static_cast<double>(dec.s.size());
  EXPECT_NEAR(frac, 0.1, 0.05);
}

TEST(CandidateObjectiveSlope, PredictionCountsOffSupportDimensions) {
  const ExactDecomposition dec = make_exact_decomposition(8, 2, 12, 0.1, 2);
  double expected = 0.0;
  for (Index i = 0; i < dec.s.cols(); ++i) expected += 8 - 2 - static_cast<double>((dec.s.col(i).array() != 0.0).count());
  const CandidateReport r = candidate_objective_slope(dec, {1e-2, 1e-3, 1e-4}, 2000, 3);
  EXPECT_DOUBLE_EQ(r.predicted_slope, expected);
  EXPECT_EQ(r.objectives.size(), 3u);
  EXPECT_NEAR(r.slope, expected, 0.1 * expected);
}

TEST(QuantizingDecoderBound, MatchesOracleAndSlope) {
  const DenseMatrix x = sample_gaussian(RngStream(4, "x"), 5, 20);
  const Vector a = sample_gaussian(RngStream(4, "a"), 5, 1).col(0);
  for (double alpha : {1e-1, 1e-4}) EXPECT_NEAR(quantizing_decoder_bound(x, a, alpha), bound_oracle(x, a, alpha),
                                                1e-9 * std::abs(bound_oracle(x, a, alpha)));
  std::vector<double> logs, values;
  for (double alpha : {1e-2, 1e-3, 1e-4, 1e-5}) {
    logs.push_back(std::log(alpha));
    values.push_back(quantizing_decoder_bound(x, a, alpha));
  }
  EXPECT_NEAR(fit_slope(logs, values), 20.0 * 4.0, 0.01 * 80.0);
}

TEST(QuantizingDecoderBound, RejectsRepeatedProjection) {
  DenseMatrix x(2, 2);
  x << 1.0, 1.0, 0.0, 5.0;
  Vector a(2);
  a << 1.0, 0.0;
  EXPECT_THROW(quantizing_decoder_bound(x, a, 0.1), std::invalid_argument);
}

TEST(FitSlope, ExactLine) {
  EXPECT_NEAR(fit_slope({0.0, 1.0, 2.0, 3.0}, {1.0, 3.0, 5.0, 7.0}), 2.0, 1e-14);
}

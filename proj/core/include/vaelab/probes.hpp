#pragma once

// Diagnostics on trained models and constructed solutions: decoder column
// pruning, encoder-variance statistics, outlier-support recovery, the
// log-alpha slope of a candidate objective and the quantizing-decoder bound.

#include "vaelab/models.hpp"
#include "vaelab/numkit.hpp"

#include <vector>

namespace vaelab {

struct PruneReport {
  std::vector<double> sorted_norms;  // descending
  double threshold = 0.0;            // 0.05 * largest norm
  Index nonzero = 0;
  bool degenerate = false;  // every column is exactly zero
};

/// Column norms of W1 (rows = hidden units, columns = latent dimensions);
/// columns below 5% of the largest norm count as zero.
PruneReport count_nonzero_columns(const DenseMatrix& w1, double relative_threshold = 0.05);

/// Indices with |v_i| > alpha.
std::vector<Index> supp_alpha(const Vector& v, double alpha);

struct Histogram {
  std::vector<double> edges;  // bins + 1 log-spaced edges
  std::vector<std::int64_t> counts;
};

/// Log-spaced histogram over [lo, hi]; values outside fall into the edge bins.
Histogram log_histogram(const std::vector<double>& values, double lo = 1e-8, double hi = 10.0, int bins = 60);

struct SigmaZReport {
  Histogram histogram;
  std::vector<double> sorted_means;  // per-dimension mean variance, ascending
  double fraction_below_01 = 0.0;
  double fraction_above_09 = 0.0;
  double fraction_mid_band = 0.0;  // entries in [0.2, 0.8]
  std::int64_t entries = 0;
};

SigmaZReport sigma_z_stats(const GenerativeModel& model, const DenseMatrix& x);
SigmaZReport sigma_z_stats_from_variances(const DenseMatrix& var);  // latent x n

struct SupportRecovery {
  std::vector<double> precision;  // per sample; 1 when both sets are empty
  std::vector<double> recall;     // per sample; 1 when the true support is empty
  double mean_precision = 0.0;
  double mean_recall = 0.0;
};

/// Compares supp_alpha of the squared residuals (the optimal decoder
/// variance) with the support of each column of s_true.
SupportRecovery support_recovery(const DenseMatrix& residuals, const DenseMatrix& s_true, double alpha);
SupportRecovery support_recovery(const GenerativeModel& model, const DenseMatrix& x, const DenseMatrix& s_true,
                                 double alpha);

/// X = Psi * Pi + S with Psi d x kappa, Pi kappa x n, S sparse.
struct ExactDecomposition {
  DenseMatrix psi;
  DenseMatrix pi;
  DenseMatrix s;
  DenseMatrix x;
};

/// Gaussian Psi, coefficient columns drawn with pairwise distance >= min_separation,
/// Bernoulli(support_fraction) outlier positions with magnitudes in [1, 2].
ExactDecomposition make_exact_decomposition(Index d, Index kappa, Index n, double support_fraction,
                                            std::uint64_t seed, double min_separation = 2.0);

struct CandidateReport {
  std::vector<double> alphas;
  std::vector<double> objectives;  // Monte Carlo estimate per alpha
  double slope = 0.0;              // least squares against log alpha
  double slope_stderr = 0.0;
  double predicted_slope = 0.0;  // sum_i (d - kappa - |s_i|_0)
};

/// Builds the candidate mu_z = pi_i, Sigma_z = alpha I, decoder mean Psi z
/// and decoder variance Lambda^(h(z)), where h quantizes z to the nearest
/// pi (ties to the smallest index) and Lambda^(i) has alpha off supp(s_i)
/// and 1 on it. Evaluates the expected VAE cost by Monte Carlo with the same
/// draws for every alpha. Throws if two coefficient columns coincide or if
/// supp_alpha(x_i - Psi pi_i) differs from supp(s_i).
CandidateReport candidate_objective_slope(const ExactDecomposition& dec, const std::vector<double>& alphas,
                                          int mc_samples, std::uint64_t seed);

/// sum_i eta / rho^2 + (d - 1) log alpha + alpha + (a^T x_i)^2 with
/// eta = max_{i != j} |x_i - x_j|^2 and rho = half the smallest gap between
/// distinct projections a^T x_i. Throws for n < 2 or repeated projections.
double quantizing_decoder_bound(const DenseMatrix& x, const Vector& a, double alpha);

/// Least-squares slope of ys against xs.
double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys);

}  // namespace vaelab

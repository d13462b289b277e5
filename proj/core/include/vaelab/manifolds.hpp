#pragma once

// Synthetic nonlinear-manifold data: a frozen random generator, its trained
// inverse, outlier corruption and the NMSE score.

#include "vaelab/diffnet.hpp"
#include "vaelab/numkit.hpp"

#include <vector>

namespace vaelab {

struct LowRankCheck {
  Index rank = 0;            // rank of the approximation that was tested
  double residual = 0.0;     // |L - L_rank|_F / |L|_F
  double threshold = 0.05;
  bool passed = false;
};

struct GroundTruth {
  MlpNet generator;  // kappa -> r1 -> r2 -> d, frozen
  MlpNet inverse;    // d -> r2 -> r1 -> kappa
  DenseMatrix z;     // kappa x n
  DenseMatrix l;     // d x n, generator applied to every column of z
  Index kappa = 0;
  std::uint64_t seed = 0;     // seed that produced the accepted sample
  int reseeds = 0;            // rejected draws before acceptance
  LowRankCheck low_rank;
  double inverse_error = 0.0;          // mean |z - inverse(generator(z))|^2 on Z
  double inverse_heldout_error = 0.0;  // same on a fresh draw of Z
  bool inverse_converged = false;
};

struct GeneratorConfig {
  Index kappa = 2;
  Index hidden1 = 64;
  Index hidden2 = 64;
  Index d = 30;
  Index n = 2000;
  std::uint64_t seed = 0;
  /// Rank of the approximation used by the low-rank check; <= 0 selects
  /// min(2 kappa, ceil(d / 2)).
  Index check_rank = 0;
  double check_threshold = 0.05;
  int max_reseeds = 10;
};

/// Draws Z ~ N(0, I) and a He-initialized ReLU generator and keeps the first
/// draw whose output is not well approximated at the check rank. Throws
/// NumericError listing every residual when all draws fail.
GroundTruth gen_ground_truth(const GeneratorConfig& cfg);

/// Relative Frobenius residual of the best rank-r approximation of m.
double low_rank_residual(const DenseMatrix& m, Index rank);

struct InverseFitConfig {
  int max_epochs = 500;
  int batch_size = 100;
  double learning_rate = 1e-3;
  double target = 1e-3;
  Index heldout = 1000;
};

/// Trains the inverse net on (generator(z), z) pairs with a squared loss
/// until the mean squared z error is <= target or max_epochs is reached.
void fit_inverse_encoder(GroundTruth& gt, const InverseFitConfig& cfg = {});

/// Mean over columns of |z - inverse(generator(z))|^2.
double inverse_mse(const MlpNet& generator, const MlpNet& inverse, const DenseMatrix& z);

enum class CorruptionMode { gaussian_unit, uniform_0_1 };

struct CorruptedData {
  DenseMatrix x;
  DenseMatrix s_true;  // x - l
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
  double nu = 0.0;
};

/// Each entry is independently replaced (not perturbed) with probability nu
/// by a draw from the chosen distribution.
CorruptedData corrupt(const DenseMatrix& l, double nu, CorruptionMode mode, std::uint64_t seed);

/// |L - L_hat|_F^2 / |L|_F^2.
double nmse(const DenseMatrix& l, const DenseMatrix& l_hat);

}  // namespace vaelab

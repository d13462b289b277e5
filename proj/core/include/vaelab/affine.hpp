#pragma once

// Affine-decoder (probabilistic PCA) objectives, their closed-form optima and
// a numeric minimizer used to cross-check them.

#include "vaelab/numkit.hpp"

namespace vaelab {

/// mu_x = W z + b, Sigma_x = lambda I.
struct AffineModel {
  DenseMatrix w;  // d x kappa
  Vector b;       // d
  double lambda = 1.0;

  Index data_dim() const { return w.rows(); }
  Index latent_dim() const { return w.cols(); }
  void validate() const;
};

/// sum_i (x_i - b)^T C^{-1} (x_i - b) + n log|C| with C = lambda I + W W^T.
/// X is d x n. Evaluated through a Cholesky factor of C.
double ppca_objective(const AffineModel& m, const DenseMatrix& x);

/// Data term of ppca_objective plus n [sum_j log(lambda + |w_j|^2) + (d - kappa) log lambda].
double ppca_objective_sep(const AffineModel& m, const DenseMatrix& x);

/// (1/n) (X - b 1^T)(X - b 1^T)^T.
DenseMatrix sample_covariance(const DenseMatrix& x, const Vector& b);

/// Column mean of X.
Vector sample_mean(const DenseMatrix& x);

/// W = U diag(sqrt(max(sigma_j - lambda, 0))) over the kappa leading
/// eigenpairs of the sample covariance; columns past d are zero.
DenseMatrix ppca_optimal_w(const DenseMatrix& x, const Vector& b, double lambda, Index kappa);

struct AffinePosterior {
  DenseMatrix mean;  // kappa x n, W^T (lambda I + W W^T)^{-1} (x_i - b)
  DenseMatrix cov;   // kappa x kappa, (W^T W / lambda + I)^{-1}, shared by all samples
};

AffinePosterior ppca_posterior(const AffineModel& m, const DenseMatrix& x);

/// Affine VAE cost for given per-sample posterior means (kappa x n) and one
/// shared posterior covariance:
/// sum_i |x_i - W mu_i - b|^2/lambda + tr(Sigma W^T W)/lambda + d log lambda
///       + tr Sigma - log|Sigma| + |mu_i|^2.
/// At the optimal posterior this equals ppca_objective + n * kappa.
double affine_vae_cost(const AffineModel& m, const DenseMatrix& x, const DenseMatrix& mu,
                       const DenseMatrix& sigma);

/// sum_j log(lambda + |w_j|^2) + (d - kappa) log lambda - log|lambda I + W W^T|,
/// evaluated in the kappa-dimensional form to avoid cancellation.
double hadamard_gap(const DenseMatrix& w, double lambda);

enum class PpcaForm { joint, separable };

/// dObjective/dW for either form.
DenseMatrix ppca_gradient(const AffineModel& m, const DenseMatrix& x, PpcaForm form);

struct MinimizeOptions {
  int max_iterations = 20000;
  double gradient_tolerance = 1e-10;  // relative to n
};

struct MinimizeResult {
  DenseMatrix w;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Gradient descent in W (b, lambda fixed) with Barzilai-Borwein steps and
/// an Armijo backtracking safeguard.
MinimizeResult minimize_ppca(const DenseMatrix& x, const Vector& b, double lambda, const DenseMatrix& w0,
                             PpcaForm form, const MinimizeOptions& opts = {});

/// Columns whose norm is at least rel * max column norm. Zero matrix -> 0.
Index count_significant_columns(const DenseMatrix& w, double rel = 1e-6);

/// Haar-distributed k x k orthogonal matrix.
DenseMatrix random_rotation(Index k, std::mt19937_64& engine);

struct SymmetryReport {
  double max_rotation_change = 0.0;     // |joint(W* R) - joint(W*)| / |joint(W*)|
  double max_permutation_change = 0.0;  // |sep(W** P) - sep(W**)| / |sep(W**)|
  Index separable_nonzero_columns = 0;
  Index joint_rank = 0;
  bool rotation_invariant = false;
  bool permutation_invariant = false;
  bool column_bound_holds = false;

  bool passed() const { return rotation_invariant && permutation_invariant && column_bound_holds; }
};

/// Symmetry checks on a numeric minimizer `w_sep` of the separable form:
/// the joint minimizer (closed form) is rotated `trials` times, `w_sep` is
/// column-permuted `trials` times, and the nonzero-column count of `w_sep`
/// is compared with the rank of the joint minimizer.
SymmetryReport affine_symmetry_report(const DenseMatrix& x, const DenseMatrix& w_sep, const Vector& b,
                                      double lambda, int trials, const RngStream& stream,
                                      double tolerance = 1e-8);

}  // namespace vaelab

#pragma once

// Low-rank plus sparse decomposition: convex RPCA by inexact ALM and an
// exhaustive l0 oracle for tiny matrices.

#include "vaelab/numkit.hpp"

#include <cstdint>

namespace vaelab {

struct Decomposition {
  DenseMatrix l;
  DenseMatrix s;
  int iterations = 0;
  double residual = 0.0;  // |X - L - S|_F / max(1, |X|_F)
  bool converged = false;
};

struct RpcaOptions {
  double lambda = 0.0;  // <= 0 selects 1 / sqrt(max(d, n))
  double tolerance = 1e-7;
  int max_iterations = 1000;
  double penalty_growth = 1.5;
};

/// min |L|_* + lambda |S|_1 s.t. X = L + S by inexact augmented Lagrangian.
/// Returns the last iterate with converged = false when max_iterations is hit.
Decomposition rpca_alm(const DenseMatrix& x, const RpcaOptions& opts = {});

/// Numerical rank: singular values > 1e-9 * largest.
Index numerical_rank(const DenseMatrix& m);

/// Entries with |s| > 1e-12.
Index count_nonzeros(const DenseMatrix& s);

/// n * rank(L) + nnz(S).
double l0_objective(const DenseMatrix& l, const DenseMatrix& s, Index n);

/// Zeroes entries of S below `threshold` in magnitude and truncates L to its
/// singular values above `threshold` times the largest.
Decomposition round_decomposition(const Decomposition& dec, double threshold = 1e-6);

struct L0Result {
  Decomposition best;
  double objective = 0.0;
  Index rank = 0;
  Index support_size = 0;
  bool unique = true;
  std::uint64_t support_mask = 0;  // bit (i * n + j) set where S is nonzero
};

struct L0Options {
  int restarts = 8;
  int als_iterations = 500;
  double accept_residual = 1e-8;
  std::uint64_t seed = 0;
};

/// Exhaustive minimization of n * rank(L) + |S|_0 over X = L + S. For every
/// support of S and rank k, L is fitted to the entries off the support by
/// alternating least squares from several random starts. Refuses d * n > 20.
/// `unique` is false when another support, or another L on the same support,
/// attains the same optimum.
L0Result l0_bruteforce(const DenseMatrix& x, Index max_rank, const L0Options& opts = {});

}  // namespace vaelab

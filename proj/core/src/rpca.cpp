#include "vaelab/rpca.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

namespace vaelab {
namespace {

using ColMatrix = Eigen::MatrixXd;

double rel_residual(const DenseMatrix& x, const DenseMatrix& l, const DenseMatrix& s) {
  return (x - l - s).norm() / std::max(1.0, x.norm());
}

// S entries on the support must clear this to count as genuinely nonzero.
constexpr double kSupportFloor = 1e-6;

struct Completion {
  DenseMatrix l;
  double max_error = std::numeric_limits<double>::infinity();
};

// Rank-k fit to the entries of x where observed(i, j) is true, by alternating
// least squares from one random start.
Completion als_complete(const DenseMatrix& x, const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& observed,
                        Index k, int iterations, double target, std::mt19937_64& eng) {
  const Index d = x.rows();
  const Index n = x.cols();
  Completion out;
  if (k == 0) {
    out.l = DenseMatrix::Zero(d, n);
    double err = 0.0;
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < n; ++j)
        if (observed(i, j)) err = std::max(err, std::abs(x(i, j)));
    out.max_error = err;
    return out;
  }
  ColMatrix u = sample_gaussian(eng, d, k);
  ColMatrix v = sample_gaussian(eng, n, k);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < iterations; ++it) {
    for (Index i = 0; i < d; ++i) {
      std::vector<Index> cols;
      for (Index j = 0; j < n; ++j)
        if (observed(i, j)) cols.push_back(j);
      if (cols.empty()) {
        u.row(i).setZero();
        continue;
      }
      ColMatrix a(static_cast<Index>(cols.size()), k);
      Vector rhs(static_cast<Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) {
        a.row(static_cast<Index>(c)) = v.row(cols[c]);
        rhs(static_cast<Index>(c)) = x(i, cols[c]);
      }
      u.row(i) = a.completeOrthogonalDecomposition().solve(rhs).transpose();
    }
    for (Index j = 0; j < n; ++j) {
      std::vector<Index> rows;
      for (Index i = 0; i < d; ++i)
        if (observed(i, j)) rows.push_back(i);
      if (rows.empty()) {
        v.row(j).setZero();
        continue;
      }
      ColMatrix a(static_cast<Index>(rows.size()), k);
      Vector rhs(static_cast<Index>(rows.size()));
      for (std::size_t r = 0; r < rows.size(); ++r) {
        a.row(static_cast<Index>(r)) = u.row(rows[r]);
        rhs(static_cast<Index>(r)) = x(rows[r], j);
      }
      v.row(j) = a.completeOrthogonalDecomposition().solve(rhs).transpose();
    }
    const DenseMatrix l = u * v.transpose();
    double err = 0.0;
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < n; ++j)
        if (observed(i, j)) err = std::max(err, std::abs(x(i, j) - l(i, j)));
    if (err < out.max_error) {
      out.max_error = err;
      out.l = l;
    }
    if (err <= 0.01 * target) break;
    if (it > 20 && err > 0.999 * prev) break;  // stalled
    prev = err;
  }
  return out;
}

}  // namespace

Decomposition rpca_alm(const DenseMatrix& x, const RpcaOptions& opts) {
  if (!all_finite(x)) throw std::invalid_argument("rpca_alm: input contains non-finite entries");
  if (x.size() == 0) throw std::invalid_argument("rpca_alm: empty input");
  if (opts.tolerance <= 0.0 || opts.max_iterations < 1 || opts.penalty_growth <= 1.0) {
    throw std::invalid_argument("rpca_alm: invalid options");
  }
  const double lam =
      opts.lambda > 0.0 ? opts.lambda : 1.0 / std::sqrt(static_cast<double>(std::max(x.rows(), x.cols())));

  Decomposition dec;
  dec.l = DenseMatrix::Zero(x.rows(), x.cols());
  dec.s = DenseMatrix::Zero(x.rows(), x.cols());
  const double norm2 = spectral_norm(x);
  if (norm2 == 0.0) {
    dec.converged = true;
    return dec;
  }
  const double norm_inf = x.cwiseAbs().maxCoeff();
  DenseMatrix y = x / std::max(norm2, norm_inf / lam);
  double mu = 1.25 / norm2;
  const double mu_max = mu * 1e7;

  for (dec.iterations = 1; dec.iterations <= opts.max_iterations; ++dec.iterations) {
    dec.l = sv_shrink(x - dec.s + y / mu, 1.0 / mu);
    dec.s = soft_threshold(x - dec.l + y / mu, lam / mu);
    const DenseMatrix z = x - dec.l - dec.s;
    y += mu * z;
    mu = std::min(mu * opts.penalty_growth, mu_max);
    dec.residual = z.norm() / std::max(1.0, x.norm());
    if (dec.residual <= opts.tolerance) {
      dec.converged = true;
      return dec;
    }
  }
  dec.iterations = opts.max_iterations;
  return dec;
}

Index numerical_rank(const DenseMatrix& m) {
  if (m.size() == 0) return 0;
  const Vector s = svd(m).s;
  if (s(0) <= 0.0) return 0;
  return static_cast<Index>((s.array() > 1e-9 * s(0)).count());
}

Index count_nonzeros(const DenseMatrix& s) { return static_cast<Index>((s.array().abs() > 1e-12).count()); }

double l0_objective(const DenseMatrix& l, const DenseMatrix& s, Index n) {
  if (l.rows() != s.rows() || l.cols() != s.cols()) throw std::invalid_argument("l0_objective: shape mismatch");
  return static_cast<double>(n * numerical_rank(l) + count_nonzeros(s));
}

Decomposition round_decomposition(const Decomposition& dec, double threshold) {
  Decomposition out = dec;
  out.s = dec.s.unaryExpr([threshold](double v) { return std::abs(v) < threshold ? 0.0 : v; });
  if (dec.l.size() > 0) {
    const SvdResult f = svd(dec.l);
    Vector kept = f.s;
    const double cut = threshold * (f.s.size() > 0 ? f.s(0) : 0.0);
    for (Index j = 0; j < kept.size(); ++j)
      if (kept(j) <= cut) kept(j) = 0.0;
    out.l = f.u * kept.asDiagonal() * f.v.transpose();
  }
  return out;
}

L0Result l0_bruteforce(const DenseMatrix& x, Index max_rank, const L0Options& opts) {
  const Index d = x.rows();
  const Index n = x.cols();
  if (d < 1 || n < 1) throw std::invalid_argument("l0_bruteforce: empty input");
  if (d * n > 20) {
    std::ostringstream msg;
    msg << "l0_bruteforce: " << d << "x" << n << " has " << d * n
        << " entries; exhaustive search is limited to 20";
    throw std::invalid_argument(msg.str());
  }
  if (!all_finite(x)) throw std::invalid_argument("l0_bruteforce: input contains non-finite entries");
  const Index cap = std::clamp<Index>(max_rank, 0, std::min(d, n));
  const int entries = static_cast<int>(d * n);
  const std::uint64_t total = std::uint64_t{1} << entries;

  // Masks ordered by support size, then numerically: the canonical order.
  std::vector<std::uint64_t> masks(total);
  for (std::uint64_t m = 0; m < total; ++m) masks[m] = m;
  std::stable_sort(masks.begin(), masks.end(),
                   [](std::uint64_t a, std::uint64_t b) { return std::popcount(a) < std::popcount(b); });

  L0Result res;
  double best = std::numeric_limits<double>::infinity();
  int optima = 0;
  const RngStream root(opts.seed, "l0_bruteforce");

  for (std::uint64_t mask : masks) {
    const int support = std::popcount(mask);
    if (static_cast<double>(support) > best) break;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed(d, n);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < n; ++j) observed(i, j) = ((mask >> (i * n + j)) & 1U) == 0;

    for (Index k = 0; k <= cap; ++k) {
      const double value = static_cast<double>(n * k + support);
      if (value > best) break;
      auto eng = root.child(std::to_string(mask) + "/" + std::to_string(k)).engine();
      std::vector<DenseMatrix> fits;
      const int starts = k == 0 ? 1 : opts.restarts;
      for (int r = 0; r < starts; ++r) {
        Completion c = als_complete(x, observed, k, opts.als_iterations, opts.accept_residual, eng);
        if (c.max_error > opts.accept_residual) continue;
        // Off the support L reproduces X; on it S must be genuinely nonzero.
        DenseMatrix s = DenseMatrix::Zero(d, n);
        bool exact_support = true;
        for (Index i = 0; i < d && exact_support; ++i)
          for (Index j = 0; j < n; ++j) {
            if (observed(i, j)) continue;
            s(i, j) = x(i, j) - c.l(i, j);
            if (std::abs(s(i, j)) <= kSupportFloor) {
              exact_support = false;
              break;
            }
          }
        if (!exact_support) continue;
        if (numerical_rank(c.l) != k) continue;
        fits.push_back(std::move(c.l));
      }
      if (fits.empty()) continue;

      bool l_varies = false;
      for (std::size_t f = 1; f < fits.size(); ++f)
        if ((fits[f] - fits[0]).norm() > 1e-6 * std::max(1.0, fits[0].norm())) l_varies = true;

      if (value < best) {
        best = value;
        optima = 0;
        res = L0Result{};
      }
      optima += l_varies ? 2 : 1;
      if (optima == (l_varies ? 2 : 1)) {
        res.best.l = fits[0];
        res.best.s = x - fits[0];
        for (Index i = 0; i < d; ++i)
          for (Index j = 0; j < n; ++j)
            if (observed(i, j)) res.best.s(i, j) = 0.0;
        res.best.residual = rel_residual(x, res.best.l, res.best.s);
        res.best.converged = true;
        res.rank = k;
        res.support_size = support;
        res.support_mask = mask;
      }
      break;  // larger k on this support only costs more
    }
  }
  res.objective = best;
  res.unique = optima == 1;
  return res;
}

}  // namespace vaelab

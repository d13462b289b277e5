#include "vaelab/affine.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vaelab {
namespace {

using ColMatrix = Eigen::MatrixXd;

Eigen::LLT<ColMatrix> factor_c(const DenseMatrix& w, double lambda) {
  ColMatrix c = w * w.transpose();
  c.diagonal().array() += lambda;
  Eigen::LLT<ColMatrix> llt(c);
  if (llt.info() != Eigen::Success) throw NumericError("ppca: lambda I + W W^T is not positive definite");
  return llt;
}

double log_det(const Eigen::LLT<ColMatrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

void check_shapes(const AffineModel& m, const DenseMatrix& x) {
  m.validate();
  if (x.rows() != m.data_dim()) {
    std::ostringstream msg;
    msg << "ppca: data has " << x.rows() << " rows, model has d = " << m.data_dim();
    throw std::invalid_argument(msg.str());
  }
}

double sep_penalty(const DenseMatrix& w, double lambda) {
  const double d = static_cast<double>(w.rows());
  const double k = static_cast<double>(w.cols());
  double total = (d - k) * std::log(lambda);
  for (Index j = 0; j < w.cols(); ++j) total += std::log(lambda + w.col(j).squaredNorm());
  return total;
}

// Objective from the sample covariance: n tr(C^{-1} S) + n * penalty.
double objective_from_cov(const DenseMatrix& w, double lambda, const ColMatrix& s, double n,
                          PpcaForm form) {
  const auto llt = factor_c(w, lambda);
  const double omega = n * llt.solve(s).trace();
  const double pen = form == PpcaForm::joint ? log_det(llt) : sep_penalty(w, lambda);
  return omega + n * pen;
}

DenseMatrix gradient_from_cov(const DenseMatrix& w, double lambda, const ColMatrix& s, double n,
                              PpcaForm form) {
  const auto llt = factor_c(w, lambda);
  const ColMatrix cinv_w = llt.solve(ColMatrix(w));
  const ColMatrix cinv_s_cinv_w = llt.solve(ColMatrix(s * cinv_w));
  DenseMatrix g = -2.0 * n * cinv_s_cinv_w;
  if (form == PpcaForm::joint) {
    g += 2.0 * n * cinv_w;
  } else {
    for (Index j = 0; j < w.cols(); ++j) {
      g.col(j) += (2.0 * n / (lambda + w.col(j).squaredNorm())) * w.col(j);
    }
  }
  return g;
}

}  // namespace

void AffineModel::validate() const {
  if (!(lambda > 0.0)) throw std::invalid_argument("AffineModel: lambda must be positive");
  if (b.size() != w.rows()) throw std::invalid_argument("AffineModel: b and W disagree on d");
}

Vector sample_mean(const DenseMatrix& x) {
  if (x.cols() == 0) throw std::invalid_argument("sample_mean: no samples");
  return x.rowwise().mean();
}

DenseMatrix sample_covariance(const DenseMatrix& x, const Vector& b) {
  if (x.cols() == 0) throw std::invalid_argument("sample_covariance: no samples");
  if (b.size() != x.rows()) throw std::invalid_argument("sample_covariance: offset size mismatch");
  const DenseMatrix centered = x.colwise() - b;
  return (centered * centered.transpose()) / static_cast<double>(x.cols());
}

double ppca_objective(const AffineModel& m, const DenseMatrix& x) {
  check_shapes(m, x);
  const auto llt = factor_c(m.w, m.lambda);
  const ColMatrix centered = x.colwise() - m.b;
  const ColMatrix whitened = llt.matrixL().solve(centered);
  return whitened.squaredNorm() + static_cast<double>(x.cols()) * log_det(llt);
}

double ppca_objective_sep(const AffineModel& m, const DenseMatrix& x) {
  check_shapes(m, x);
  const auto llt = factor_c(m.w, m.lambda);
  const ColMatrix centered = x.colwise() - m.b;
  const ColMatrix whitened = llt.matrixL().solve(centered);
  return whitened.squaredNorm() + static_cast<double>(x.cols()) * sep_penalty(m.w, m.lambda);
}

DenseMatrix ppca_optimal_w(const DenseMatrix& x, const Vector& b, double lambda, Index kappa) {
  if (!(lambda > 0.0)) throw std::invalid_argument("ppca_optimal_w: lambda must be positive");
  if (kappa < 0) throw std::invalid_argument("ppca_optimal_w: kappa must be nonnegative");
  const ColMatrix s = sample_covariance(x, b);
  Eigen::SelfAdjointEigenSolver<ColMatrix> eig(s);
  if (eig.info() != Eigen::Success) throw NumericError("ppca_optimal_w: eigendecomposition failed");
  const Index d = x.rows();
  DenseMatrix w = DenseMatrix::Zero(d, kappa);
  for (Index j = 0; j < std::min(kappa, d); ++j) {
    const Index src = d - 1 - j;  // eigenvalues come ascending
    const double sigma = eig.eigenvalues()(src);
    if (sigma <= lambda) continue;
    Vector u = eig.eigenvectors().col(src);
    Index arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u(arg) < 0.0) u = -u;
    w.col(j) = std::sqrt(sigma - lambda) * u;
  }
  return w;
}

AffinePosterior ppca_posterior(const AffineModel& m, const DenseMatrix& x) {
  check_shapes(m, x);
  const auto llt = factor_c(m.w, m.lambda);
  const ColMatrix centered = x.colwise() - m.b;
  AffinePosterior p;
  p.mean = m.w.transpose() * llt.solve(centered);
  ColMatrix precision = m.w.transpose() * m.w / m.lambda;
  precision.diagonal().array() += 1.0;
  p.cov = precision.llt().solve(ColMatrix::Identity(m.latent_dim(), m.latent_dim()));
  p.cov = 0.5 * (p.cov + p.cov.transpose()).eval();
  return p;
}

double affine_vae_cost(const AffineModel& m, const DenseMatrix& x, const DenseMatrix& mu,
                       const DenseMatrix& sigma) {
  check_shapes(m, x);
  const Index k = m.latent_dim();
  if (mu.rows() != k || mu.cols() != x.cols() || sigma.rows() != k || sigma.cols() != k) {
    throw std::invalid_argument("affine_vae_cost: posterior shapes do not match the model");
  }
  const ColMatrix sig = sigma;
  Eigen::LLT<ColMatrix> llt(sig);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("affine_vae_cost: Sigma is not positive definite");
  const double n = static_cast<double>(x.cols());
  const double d = static_cast<double>(m.data_dim());
  const DenseMatrix resid = (x - m.w * mu).colwise() - m.b;
  const double per_sample_const = (sig * (m.w.transpose() * m.w)).trace() / m.lambda + d * std::log(m.lambda) +
                                  sig.trace() - log_det(llt);
  return resid.squaredNorm() / m.lambda + mu.squaredNorm() + n * per_sample_const;
}

double hadamard_gap(const DenseMatrix& w, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("hadamard_gap: lambda must be positive");
  // log|lambda I_d + W W^T| = d log lambda + log|I_k + W^T W / lambda|
  ColMatrix g = w.transpose() * w / lambda;
  double sum_logs = 0.0;
  for (Index j = 0; j < g.rows(); ++j) sum_logs += std::log1p(g(j, j));
  g.diagonal().array() += 1.0;
  Eigen::LLT<ColMatrix> llt(g);
  if (llt.info() != Eigen::Success) throw NumericError("hadamard_gap: Gram matrix factorization failed");
  return sum_logs - log_det(llt);
}

DenseMatrix ppca_gradient(const AffineModel& m, const DenseMatrix& x, PpcaForm form) {
  check_shapes(m, x);
  const ColMatrix s = sample_covariance(x, m.b);
  return gradient_from_cov(m.w, m.lambda, s, static_cast<double>(x.cols()), form);
}

MinimizeResult minimize_ppca(const DenseMatrix& x, const Vector& b, double lambda, const DenseMatrix& w0,
                             PpcaForm form, const MinimizeOptions& opts) {
  AffineModel probe{w0, b, lambda};
  check_shapes(probe, x);
  const ColMatrix s = sample_covariance(x, b);
  const double n = static_cast<double>(x.cols());
  const double tol = opts.gradient_tolerance * n;

  MinimizeResult r;
  r.w = w0;
  double f = objective_from_cov(r.w, lambda, s, n, form);
  DenseMatrix g = gradient_from_cov(r.w, lambda, s, n, form);
  double step = 1.0 / std::max(1.0, g.norm());
  DenseMatrix w_prev, g_prev;
  int stalled = 0;

  for (r.iterations = 0; r.iterations < opts.max_iterations; ++r.iterations) {
    const double gnorm2 = g.squaredNorm();
    if (std::sqrt(gnorm2) <= tol) {
      r.converged = true;
      break;
    }
    if (r.iterations > 0) {
      const DenseMatrix sk = r.w - w_prev;
      const DenseMatrix yk = g - g_prev;
      const double sy = (sk.array() * yk.array()).sum();
      if (sy > 0.0 && std::isfinite(sy)) step = sk.squaredNorm() / sy;
    }
    double t = step;
    DenseMatrix w_new;
    double f_new = f;
    bool accepted = false;
    for (int back = 0; back < 60; ++back) {
      w_new = r.w - t * g;
      f_new = objective_from_cov(w_new, lambda, s, n, form);
      if (std::isfinite(f_new) && f_new <= f - 1e-4 * t * gnorm2) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // No representable decrease left along the gradient.
      r.converged = std::sqrt(gnorm2) <= 1e-6 * n;
      break;
    }
    // Once decreases fall below the resolution of f the Armijo test accepts
    // any step; stop after a run of those instead of wandering.
    stalled = f - f_new <= 1e-15 * std::abs(f) ? stalled + 1 : 0;
    if (stalled >= 50) {
      r.converged = std::sqrt(gnorm2) <= 1e-6 * n;
      break;
    }
    w_prev = std::move(r.w);
    g_prev = std::move(g);
    r.w = std::move(w_new);
    f = f_new;
    g = gradient_from_cov(r.w, lambda, s, n, form);
  }
  AffineModel done{r.w, b, lambda};
  r.objective = form == PpcaForm::joint ? ppca_objective(done, x) : ppca_objective_sep(done, x);
  return r;
}

Index count_significant_columns(const DenseMatrix& w, double rel) {
  if (w.cols() == 0) return 0;
  const Vector norms = w.colwise().norm().transpose();
  const double top = norms.maxCoeff();
  if (top <= 0.0) return 0;
  return static_cast<Index>((norms.array() >= rel * top).count());
}

DenseMatrix random_rotation(Index k, std::mt19937_64& engine) {
  const ColMatrix g = sample_gaussian(engine, k, k);
  Eigen::HouseholderQR<ColMatrix> qr(g);
  ColMatrix q = qr.householderQ();
  const ColMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < k; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  return q;
}

SymmetryReport affine_symmetry_report(const DenseMatrix& x, const DenseMatrix& w_sep, const Vector& b,
                                      double lambda, int trials, const RngStream& stream,
                                      double tolerance) {
  if (trials < 1) throw std::invalid_argument("affine_symmetry_report: trials must be >= 1");
  const Index k = w_sep.cols();
  const DenseMatrix w_joint = ppca_optimal_w(x, b, lambda, k);
  const double joint_ref = ppca_objective({w_joint, b, lambda}, x);
  const double sep_ref = ppca_objective_sep({w_sep, b, lambda}, x);

  SymmetryReport rep;
  auto eng = stream.child("rotations").engine();
  for (int t = 0; t < trials; ++t) {
    const DenseMatrix rot = random_rotation(k, eng);
    const double v = ppca_objective({w_joint * rot, b, lambda}, x);
    rep.max_rotation_change = std::max(rep.max_rotation_change, std::abs(v - joint_ref) / std::abs(joint_ref));
  }
  auto perm_eng = stream.child("permutations").engine();
  std::vector<Index> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (int t = 0; t < trials; ++t) {
    std::shuffle(perm.begin(), perm.end(), perm_eng);
    DenseMatrix permuted(w_sep.rows(), k);
    for (Index j = 0; j < k; ++j) permuted.col(j) = w_sep.col(perm[static_cast<std::size_t>(j)]);
    const double v = ppca_objective_sep({permuted, b, lambda}, x);
    rep.max_permutation_change = std::max(rep.max_permutation_change, std::abs(v - sep_ref) / std::abs(sep_ref));
  }
  rep.separable_nonzero_columns = count_significant_columns(w_sep);
  rep.joint_rank = count_significant_columns(w_joint);
  rep.rotation_invariant = rep.max_rotation_change <= tolerance;
  rep.permutation_invariant = rep.max_permutation_change <= tolerance;
  rep.column_bound_holds = rep.separable_nonzero_columns <= rep.joint_rank;
  return rep;
}

}  // namespace vaelab

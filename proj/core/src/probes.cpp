#include "vaelab/probes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace vaelab {
namespace {

Index nearest_column(const DenseMatrix& pts, const Vector& z) {
  Index best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < pts.cols(); ++j) {
    const double dist = (pts.col(j) - z).squaredNorm();
    if (dist < best_dist) {  // strict: ties keep the smaller index
      best_dist = dist;
      best = j;
    }
  }
  return best;
}

SupportRecovery summarize(std::vector<double> precision, std::vector<double> recall) {
  SupportRecovery r;
  r.precision = std::move(precision);
  r.recall = std::move(recall);
  if (!r.precision.empty()) {
    r.mean_precision = std::accumulate(r.precision.begin(), r.precision.end(), 0.0) / r.precision.size();
    r.mean_recall = std::accumulate(r.recall.begin(), r.recall.end(), 0.0) / r.recall.size();
  }
  return r;
}

}  // namespace

PruneReport count_nonzero_columns(const DenseMatrix& w1, double relative_threshold) {
  PruneReport rep;
  rep.sorted_norms.reserve(static_cast<std::size_t>(w1.cols()));
  for (Index j = 0; j < w1.cols(); ++j) rep.sorted_norms.push_back(w1.col(j).norm());
  std::sort(rep.sorted_norms.begin(), rep.sorted_norms.end(), std::greater<>());
  const double top = rep.sorted_norms.empty() ? 0.0 : rep.sorted_norms.front();
  if (top <= 0.0) {
    rep.degenerate = true;
    return rep;
  }
  rep.threshold = relative_threshold * top;
  rep.nonzero = static_cast<Index>(
      std::count_if(rep.sorted_norms.begin(), rep.sorted_norms.end(), [&](double v) { return v >= rep.threshold; }));
  return rep;
}

std::vector<Index> supp_alpha(const Vector& v, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("supp_alpha: alpha must be nonnegative");
  std::vector<Index> out;
  for (Index i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > alpha) out.push_back(i);
  return out;
}

Histogram log_histogram(const std::vector<double>& values, double lo, double hi, int bins) {
  if (!(lo > 0.0) || !(hi > lo) || bins < 1) throw std::invalid_argument("log_histogram: invalid range");
  Histogram h;
  const double a = std::log10(lo);
  const double step = (std::log10(hi) - a) / bins;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(std::pow(10.0, a + step * b));
  h.edges.front() = lo;
  h.edges.back() = hi;
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    int bin = 0;
    if (v > 0.0) bin = static_cast<int>(std::floor((std::log10(v) - a) / step));
    bin = std::clamp(bin, 0, bins - 1);
    ++h.counts[static_cast<std::size_t>(bin)];
  }
  return h;
}

SigmaZReport sigma_z_stats_from_variances(const DenseMatrix& var) {
  SigmaZReport rep;
  rep.entries = static_cast<std::int64_t>(var.size());
  std::vector<double> values(var.data(), var.data() + var.size());
  rep.histogram = log_histogram(values);
  for (Index k = 0; k < var.rows(); ++k) rep.sorted_means.push_back(var.row(k).mean());
  std::sort(rep.sorted_means.begin(), rep.sorted_means.end());
  if (rep.entries > 0) {
    const double total = static_cast<double>(rep.entries);
    rep.fraction_below_01 = static_cast<double>((var.array() < 0.1).count()) / total;
    rep.fraction_above_09 = static_cast<double>((var.array() > 0.9).count()) / total;
    rep.fraction_mid_band = static_cast<double>(((var.array() >= 0.2) && (var.array() <= 0.8)).count()) / total;
  }
  return rep;
}

SigmaZReport sigma_z_stats(const GenerativeModel& model, const DenseMatrix& x) {
  return sigma_z_stats_from_variances(encode_var(model, x));
}

SupportRecovery support_recovery(const DenseMatrix& residuals, const DenseMatrix& s_true, double alpha) {
  if (residuals.rows() != s_true.rows() || residuals.cols() != s_true.cols()) {
    throw std::invalid_argument("support_recovery: shape mismatch");
  }
  std::vector<double> precision, recall;
  for (Index i = 0; i < s_true.cols(); ++i) {
    const Vector c = residuals.col(i).array().square();
    const auto est = supp_alpha(c, alpha);
    const auto truth = supp_alpha(s_true.col(i), 0.0);
    std::vector<Index> both;
    std::set_intersection(est.begin(), est.end(), truth.begin(), truth.end(), std::back_inserter(both));
    precision.push_back(est.empty() ? (truth.empty() ? 1.0 : 0.0)
                                    : static_cast<double>(both.size()) / static_cast<double>(est.size()));
    recall.push_back(truth.empty() ? 1.0 : static_cast<double>(both.size()) / static_cast<double>(truth.size()));
  }
  return summarize(std::move(precision), std::move(recall));
}

SupportRecovery support_recovery(const GenerativeModel& model, const DenseMatrix& x, const DenseMatrix& s_true,
                                 double alpha) {
  return support_recovery(x - reconstruct(model, x), s_true, alpha);
}

ExactDecomposition make_exact_decomposition(Index d, Index kappa, Index n, double support_fraction,
                                            std::uint64_t seed, double min_separation) {
  if (kappa < 1 || kappa > d || n < 1) throw std::invalid_argument("make_exact_decomposition: bad dimensions");
  if (support_fraction < 0.0 || support_fraction > 1.0) {
    throw std::invalid_argument("make_exact_decomposition: support fraction must lie in [0, 1]");
  }
  const RngStream root(seed, "exact_decomposition");
  ExactDecomposition dec;
  dec.psi = sample_gaussian(root.child("psi"), d, kappa);

  auto eng = root.child("pi").engine();
  dec.pi.resize(kappa, n);
  // Spread so that coefficient columns rarely need redrawing.
  const double scale = std::max(1.0, min_separation * std::pow(static_cast<double>(n), 1.0 / kappa));
  for (Index i = 0; i < n; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw NumericError("make_exact_decomposition: cannot separate coefficient columns");
      Vector cand = scale * sample_gaussian(eng, kappa, 1).col(0);
      bool ok = true;
      for (Index j = 0; j < i && ok; ++j) ok = (dec.pi.col(j) - cand).norm() >= min_separation;
      if (ok) {
        dec.pi.col(i) = cand;
        break;
      }
    }
  }

  auto s_eng = root.child("s").engine();
  std::bernoulli_distribution coin(support_fraction);
  std::uniform_real_distribution<double> mag(1.0, 2.0);
  dec.s = DenseMatrix::Zero(d, n);
  for (Index r = 0; r < d; ++r) {
    for (Index c = 0; c < n; ++c) {
      if (!coin(s_eng)) continue;
      const double m = mag(s_eng);
      dec.s(r, c) = coin(s_eng) ? m : -m;
    }
  }
  dec.x = dec.psi * dec.pi + dec.s;
  return dec;
}

double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("fit_slope: need >= 2 paired points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: abscissae are all equal");
  return sxy / sxx;
}

CandidateReport candidate_objective_slope(const ExactDecomposition& dec, const std::vector<double>& alphas,
                                          int mc_samples, std::uint64_t seed) {
  const Index d = dec.x.rows();
  const Index kappa = dec.psi.cols();
  const Index n = dec.x.cols();
  if (alphas.size() < 2) throw std::invalid_argument("candidate_objective_slope: need at least two alphas");
  for (double a : alphas)
    if (!(a > 0.0)) throw std::invalid_argument("candidate_objective_slope: alphas must be positive");
  if (mc_samples < 2) throw std::invalid_argument("candidate_objective_slope: need at least two samples");
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if ((dec.pi.col(i) - dec.pi.col(j)).norm() == 0.0) {
        std::ostringstream msg;
        msg << "candidate_objective_slope: coefficient columns " << i << " and " << j
            << " coincide; nearest-column quantization is ill-defined";
        throw std::invalid_argument(msg.str());
      }

  // Support feasibility at every alpha, checked before any sampling.
  const DenseMatrix resid = dec.x - dec.psi * dec.pi;
  for (double a : alphas)
    for (Index i = 0; i < n; ++i)
      if (supp_alpha(resid.col(i), a) != supp_alpha(dec.s.col(i), 0.0)) {
        std::ostringstream msg;
        msg << "candidate_objective_slope: residual support of sample " << i << " differs from supp(s) at alpha " << a;
        throw std::invalid_argument(msg.str());
      }

  CandidateReport rep;
  rep.alphas = alphas;
  std::vector<double> log_alpha;
  for (double a : alphas) log_alpha.push_back(std::log(a));
  for (Index i = 0; i < n; ++i) {
    const Index nnz = static_cast<Index>(supp_alpha(dec.s.col(i), 0.0).size());
    rep.predicted_slope += static_cast<double>(d - kappa - nnz);
  }

  const std::size_t m = alphas.size();
  std::vector<std::vector<double>> per_draw(static_cast<std::size_t>(mc_samples), std::vector<double>(m, 0.0));
  for (Index i = 0; i < n; ++i) {
    auto eng = RngStream(seed, "candidate").child(std::to_string(i)).engine();
    const DenseMatrix eps = sample_gaussian(eng, kappa, mc_samples);
    const double pi_sq = dec.pi.col(i).squaredNorm();
    for (std::size_t k = 0; k < m; ++k) {
      const double a = alphas[k];
      const double sd = std::sqrt(a);
      const double latent = static_cast<double>(kappa) * (a - std::log(a)) + pi_sq;
      for (int t = 0; t < mc_samples; ++t) {
        const Vector z = dec.pi.col(i) + sd * eps.col(t);
        const Index h = nearest_column(dec.pi, z);
        const Vector r = dec.x.col(i) - dec.psi * z;
        double cost = latent;
        for (Index j = 0; j < d; ++j) {
          const double lam = dec.s(j, h) == 0.0 ? a : 1.0;
          cost += r(j) * r(j) / lam + std::log(lam);
        }
        per_draw[static_cast<std::size_t>(t)][k] += cost;
      }
    }
  }

  rep.objectives.assign(m, 0.0);
  std::vector<double> slopes;
  slopes.reserve(per_draw.size());
  for (const auto& draw : per_draw) {
    for (std::size_t k = 0; k < m; ++k) rep.objectives[k] += draw[k] / mc_samples;
    slopes.push_back(fit_slope(log_alpha, draw));
  }
  rep.slope = fit_slope(log_alpha, rep.objectives);
  const double mean = std::accumulate(slopes.begin(), slopes.end(), 0.0) / slopes.size();
  double var = 0.0;
  for (double s : slopes) var += (s - mean) * (s - mean);
  var /= static_cast<double>(slopes.size() - 1);
  rep.slope_stderr = std::sqrt(var / static_cast<double>(slopes.size()));
  return rep;
}

double quantizing_decoder_bound(const DenseMatrix& x, const Vector& a, double alpha) {
  const Index n = x.cols();
  const Index d = x.rows();
  if (n < 2) throw std::invalid_argument("quantizing_decoder_bound: need at least two samples");
  if (a.size() != d) throw std::invalid_argument("quantizing_decoder_bound: projection size mismatch");
  if (!(alpha > 0.0)) throw std::invalid_argument("quantizing_decoder_bound: alpha must be positive");
  const Vector mu = x.transpose() * a;
  double eta = 0.0;
  double gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      eta = std::max(eta, (x.col(i) - x.col(j)).squaredNorm());
      gap = std::min(gap, std::abs(mu(i) - mu(j)));
    }
  }
  if (gap == 0.0) throw std::invalid_argument("quantizing_decoder_bound: two samples share a projection");
  const double rho = 0.5 * gap;
  const double per_sample = eta / (rho * rho) + static_cast<double>(d - 1) * std::log(alpha) + alpha;
  return static_cast<double>(n) * per_sample + mu.squaredNorm();
}

}  // namespace vaelab

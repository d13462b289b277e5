#include "vaelab/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace vaelab {
namespace {

std::string fmt_nu(double nu) {
  std::ostringstream s;
  s.precision(17);
  s << nu;
  return s.str();
}

}  // namespace

double low_rank_residual(const DenseMatrix& m, Index rank) {
  const Vector s = svd(m).s;
  const double total = s.squaredNorm();
  if (total == 0.0) return 0.0;
  const Index keep = std::clamp<Index>(rank, 0, s.size());
  return std::sqrt(s.tail(s.size() - keep).squaredNorm() / total);
}

GroundTruth gen_ground_truth(const GeneratorConfig& cfg) {
  if (cfg.kappa < 1 || cfg.kappa >= cfg.d) {
    std::ostringstream msg;
    msg << "gen_ground_truth: need 1 <= kappa < d, got kappa = " << cfg.kappa << ", d = " << cfg.d;
    throw std::invalid_argument(msg.str());
  }
  if (cfg.n < 1 || cfg.hidden1 < 1 || cfg.hidden2 < 1) {
    throw std::invalid_argument("gen_ground_truth: n and hidden sizes must be positive");
  }
  const Index rank = cfg.check_rank > 0 ? cfg.check_rank : std::min(2 * cfg.kappa, (cfg.d + 1) / 2);
  std::vector<double> seen;
  for (int attempt = 0; attempt <= cfg.max_reseeds; ++attempt) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(attempt);
    const RngStream root(seed, "ground_truth");
    auto gen_eng = root.child("generator").engine();
    const Index dims[] = {cfg.kappa, cfg.hidden1, cfg.hidden2, cfg.d};
    GroundTruth gt;
    gt.generator = MlpNet::he_init(dims, Activation::relu, Activation::identity, gen_eng);
    gt.z = sample_gaussian(root.child("z"), cfg.kappa, cfg.n);
    gt.l = predict(gt.generator, gt.z.transpose()).transpose();
    gt.kappa = cfg.kappa;
    gt.seed = seed;
    gt.reseeds = attempt;
    gt.low_rank.rank = rank;
    gt.low_rank.threshold = cfg.check_threshold;
    gt.low_rank.residual = low_rank_residual(gt.l, rank);
    gt.low_rank.passed = gt.low_rank.residual > cfg.check_threshold;
    if (gt.low_rank.passed) {
      auto inv_eng = root.child("inverse").engine();
      const Index inv_dims[] = {cfg.d, cfg.hidden2, cfg.hidden1, cfg.kappa};
      gt.inverse = MlpNet::he_init(inv_dims, Activation::relu, Activation::identity, inv_eng);
      gt.inverse_error = inverse_mse(gt.generator, gt.inverse, gt.z);
      return gt;
    }
    seen.push_back(gt.low_rank.residual);
  }
  std::ostringstream msg;
  msg << "gen_ground_truth: every draw is within " << cfg.check_threshold << " of rank " << rank
      << "; residuals:";
  for (double r : seen) msg << ' ' << r;
  throw NumericError(msg.str());
}

double inverse_mse(const MlpNet& generator, const MlpNet& inverse, const DenseMatrix& z) {
  const DenseMatrix zt = z.transpose();
  const DenseMatrix zhat = predict(inverse, predict(generator, zt));
  return (zt - zhat).squaredNorm() / static_cast<double>(z.cols());
}

void fit_inverse_encoder(GroundTruth& gt, const InverseFitConfig& cfg) {
  if (cfg.max_epochs < 1 || cfg.batch_size < 1) {
    throw std::invalid_argument("fit_inverse_encoder: epochs and batch size must be positive");
  }
  const DenseMatrix xt = gt.l.transpose();
  const DenseMatrix zt = gt.z.transpose();
  const auto n = static_cast<std::size_t>(xt.rows());
  const RngStream root(gt.seed, "ground_truth/inverse_fit");
  auto shuffle_eng = root.child("shuffle").engine();

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState state(gt.inverse, adam_cfg);
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  gt.inverse_error = inverse_mse(gt.generator, gt.inverse, gt.z);
  gt.inverse_converged = gt.inverse_error <= cfg.target;
  for (int epoch = 0; epoch < cfg.max_epochs && !gt.inverse_converged; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_eng);
    for (std::size_t begin = 0; begin < n; begin += bs) {
      const std::size_t end = std::min(n, begin + bs);
      const auto rows = static_cast<Index>(end - begin);
      DenseMatrix xb(rows, xt.cols());
      DenseMatrix zb(rows, zt.cols());
      for (std::size_t k = begin; k < end; ++k) {
        xb.row(static_cast<Index>(k - begin)) = xt.row(order[k]);
        zb.row(static_cast<Index>(k - begin)) = zt.row(order[k]);
      }
      const ForwardTrace tr = forward(gt.inverse, xb);
      const DenseMatrix grad = (2.0 / static_cast<double>(rows)) * (tr.output - zb);
      adam_step(state, gt.inverse, backward(gt.inverse, tr, grad).params, 0.0);
    }
    gt.inverse_error = inverse_mse(gt.generator, gt.inverse, gt.z);
    gt.inverse_converged = gt.inverse_error <= cfg.target;
  }
  const DenseMatrix fresh = sample_gaussian(root.child("heldout"), gt.kappa, std::max<Index>(1, cfg.heldout));
  gt.inverse_heldout_error = inverse_mse(gt.generator, gt.inverse, fresh);
}

CorruptedData corrupt(const DenseMatrix& l, double nu, CorruptionMode mode, std::uint64_t seed) {
  if (!(nu >= 0.0 && nu <= 1.0)) throw std::invalid_argument("corrupt: nu must lie in [0, 1]");
  const std::string label = std::string("corrupt/") + (mode == CorruptionMode::gaussian_unit ? "gaussian" : "uniform") +
                            "/" + fmt_nu(nu);
  auto eng = RngStream(seed, label).engine();
  std::bernoulli_distribution coin(nu);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  CorruptedData out;
  out.nu = nu;
  out.x = l;
  out.mask.setConstant(l.rows(), l.cols(), false);
  // Row-major sweep so the draw order is fixed.
  for (Index i = 0; i < l.rows(); ++i) {
    for (Index j = 0; j < l.cols(); ++j) {
      if (!coin(eng)) continue;
      out.mask(i, j) = true;
      out.x(i, j) = mode == CorruptionMode::gaussian_unit ? normal(eng) : uniform(eng);
    }
  }
  out.s_true = out.x - l;
  return out;
}

double nmse(const DenseMatrix& l, const DenseMatrix& l_hat) {
  if (l.rows() != l_hat.rows() || l.cols() != l_hat.cols()) throw std::invalid_argument("nmse: shape mismatch");
  const double denom = l.squaredNorm();
  if (denom == 0.0) throw std::invalid_argument("nmse: reference matrix has zero norm");
  return (l - l_hat).squaredNorm() / denom;
}

}  // namespace vaelab

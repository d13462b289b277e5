#include "vaelab/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vaelab {
namespace {

MlpNet linear_he(Index in, Index out, Activation act, std::mt19937_64& eng) {
  const Index dims[] = {in, out};
  return MlpNet::he_init(dims, act, act, eng);
}

double nmse_of(const DenseMatrix& truth, const DenseMatrix& estimate) {
  return (truth - estimate).squaredNorm() / truth.squaredNorm();
}

// Rows of xt (n x d) selected by idx[begin, end).
DenseMatrix gather_rows(const DenseMatrix& xt, const std::vector<Index>& idx, std::size_t begin,
                        std::size_t end) {
  DenseMatrix out(static_cast<Index>(end - begin), xt.cols());
  for (std::size_t k = begin; k < end; ++k) out.row(static_cast<Index>(k - begin)) = xt.row(idx[k]);
  return out;
}

struct EncoderPass {
  ForwardTrace trunk;
  ForwardTrace mean;
  ForwardTrace var;  // only filled for VAEs
};

EncoderPass encode(const GenerativeModel& model, const DenseMatrix& xb) {
  EncoderPass p;
  p.trunk = forward(model.encoder_trunk, xb);
  p.mean = forward(model.mean_head, p.trunk.output);
  if (model.kind == ModelKind::vae) p.var = forward(model.logvar_head, p.trunk.output);
  return p;
}

void backprop_encoder(const GenerativeModel& model, const EncoderPass& p, const DenseMatrix& g_mu,
                      const DenseMatrix* g_var, ModelGradients& out) {
  BackwardResult mean_back = backward(model.mean_head, p.mean, g_mu);
  DenseMatrix g_trunk = std::move(mean_back.input);
  out.mean_head = std::move(mean_back.params);
  if (g_var != nullptr) {
    BackwardResult var_back = backward(model.logvar_head, p.var, *g_var);
    g_trunk += var_back.input;
    out.logvar_head = std::move(var_back.params);
  } else {
    out.logvar_head = Gradients::zeros_like(model.logvar_head);
  }
  out.trunk = backward(model.encoder_trunk, p.trunk, g_trunk).params;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::vae:
      return "vae";
    case ModelKind::ae_l2:
      return "ae_l2";
    case ModelKind::ae_l1:
      return "ae_l1";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "vae") return ModelKind::vae;
  if (name == "ae_l2") return ModelKind::ae_l2;
  if (name == "ae_l1") return ModelKind::ae_l1;
  throw std::invalid_argument("unknown model kind '" + name + "' (expected vae, ae_l2 or ae_l1)");
}

GenerativeModel make_model(ModelKind kind, const Architecture& arch, const RngStream& stream) {
  if (arch.data_dim < 1 || arch.latent_dim < 1) {
    throw std::invalid_argument("make_model: data and latent dimensions must be positive");
  }
  for (Index w : arch.encoder_hidden) {
    if (w < 1) throw std::invalid_argument("make_model: encoder widths must be positive");
  }
  for (Index w : arch.decoder_hidden) {
    if (w < 1) throw std::invalid_argument("make_model: decoder widths must be positive");
  }
  auto eng = stream.child("init").engine();
  GenerativeModel m;
  m.kind = kind;

  const std::size_t shared = std::min<std::size_t>(arch.encoder_hidden.size(), 2);
  std::vector<Index> trunk_dims{arch.data_dim};
  trunk_dims.insert(trunk_dims.end(), arch.encoder_hidden.begin(), arch.encoder_hidden.begin() + shared);
  m.encoder_trunk = MlpNet::he_init(trunk_dims, Activation::relu, Activation::relu, eng);

  const Index trunk_out = trunk_dims.back();
  std::vector<Index> mean_dims{trunk_out};
  mean_dims.insert(mean_dims.end(), arch.encoder_hidden.begin() + shared, arch.encoder_hidden.end());
  mean_dims.push_back(arch.latent_dim);
  m.mean_head = MlpNet::he_init(mean_dims, Activation::relu, Activation::identity, eng);

  if (kind == ModelKind::vae) {
    m.logvar_head = linear_he(trunk_out, arch.latent_dim, Activation::exponential, eng);
  } else {
    m.logvar_head = MlpNet(trunk_out);
  }

  std::vector<Index> dec_dims{arch.latent_dim};
  dec_dims.insert(dec_dims.end(), arch.decoder_hidden.begin(), arch.decoder_hidden.end());
  dec_dims.push_back(arch.data_dim);
  m.decoder = MlpNet::he_init(dec_dims, Activation::relu, Activation::identity, eng);
  return m;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || tau < 1) {
    throw std::invalid_argument("TrainConfig: epochs, batch_size and tau must be >= 1");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("TrainConfig: alpha must be positive");
  if (c1 < 0.0 || c2 < 0.0) throw std::invalid_argument("TrainConfig: c1 and c2 must be nonnegative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
}

double xi_alpha(double c, double alpha) { return std::max(c - alpha, 0.0) + alpha; }

double robust_data_loss(const Vector& x, const Vector& mu, double alpha) {
  if (x.size() != mu.size()) throw std::invalid_argument("robust_data_loss: size mismatch");
  double total = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double r = x(j) - mu(j);
    const double c = r * r;
    const double xi = xi_alpha(c, alpha);
    total += c / xi + std::log(xi);
  }
  return total;
}

double robust_data_loss_rows(const DenseMatrix& x, const DenseMatrix& mu, double alpha,
                             DenseMatrix* grad_mu) {
  if (x.rows() != mu.rows() || x.cols() != mu.cols()) {
    throw std::invalid_argument("robust_data_loss_rows: shape mismatch");
  }
  if (grad_mu != nullptr) grad_mu->resize(x.rows(), x.cols());
  const double log_alpha = std::log(alpha);
  double total = 0.0;
  for (Index k = 0; k < x.size(); ++k) {
    const double r = x.data()[k] - mu.data()[k];
    const double c = r * r;
    double dldc;
    if (c <= alpha) {
      total += c / alpha + log_alpha;
      dldc = 1.0 / alpha;
    } else {
      total += 1.0 + std::log(c);
      dldc = 1.0 / c;
    }
    if (grad_mu != nullptr) grad_mu->data()[k] = -2.0 * r * dldc;
  }
  return total;
}

double kl_diag_gaussian(const Vector& mu, const Vector& var) {
  if (mu.size() != var.size()) throw std::invalid_argument("kl_diag_gaussian: size mismatch");
  if ((var.array() <= 0.0).any()) throw std::invalid_argument("kl_diag_gaussian: variances must be positive");
  return 0.5 * (var.sum() + mu.squaredNorm() - static_cast<double>(mu.size()) - var.array().log().sum());
}

double parameter_penalty(const GenerativeModel& model, double c1) {
  return c1 * (model.encoder_trunk.squared_norm() + model.mean_head.squared_norm() +
               model.logvar_head.squared_norm() + model.decoder.squared_norm());
}

double vae_loss_from_moments(const MlpNet& decoder, const DenseMatrix& xb, const DenseMatrix& mu,
                             const DenseMatrix& var, const DenseMatrix& eps, double alpha) {
  const Index b = xb.rows();
  if (mu.rows() != b || var.rows() != b || mu.cols() != var.cols() || eps.cols() != mu.cols() ||
      eps.rows() % b != 0 || eps.rows() == 0) {
    throw std::invalid_argument("vae_loss_from_moments: inconsistent shapes");
  }
  const Index tau = eps.rows() / b;
  const DenseMatrix sd = var.cwiseSqrt();
  double data = 0.0;
  for (Index t = 0; t < tau; ++t) {
    DenseMatrix z = mu + sd.cwiseProduct(eps.middleRows(t * b, b));
    data += robust_data_loss_rows(xb, predict(decoder, z), alpha, nullptr);
  }
  double kl = 0.0;
  for (Index i = 0; i < b; ++i) kl += kl_diag_gaussian(mu.row(i).transpose(), var.row(i).transpose());
  return (data / static_cast<double>(tau) + 2.0 * kl) / static_cast<double>(b);
}

BatchLoss vae_batch_loss(const GenerativeModel& model, const DenseMatrix& xb, const TrainConfig& cfg,
                         const DenseMatrix& eps) {
  if (model.kind != ModelKind::vae) throw std::invalid_argument("vae_batch_loss: model is not a VAE");
  const Index b = xb.rows();
  const Index k = model.latent_dim();
  if (b == 0 || eps.cols() != k || eps.rows() % b != 0 || eps.rows() == 0) {
    throw std::invalid_argument("vae_batch_loss: eps must stack tau blocks of batch x latent");
  }
  const Index tau = eps.rows() / b;
  const double inv_b = 1.0 / static_cast<double>(b);
  const double inv_tau = 1.0 / static_cast<double>(tau);

  const EncoderPass enc = encode(model, xb);
  const DenseMatrix& mu = enc.mean.output;
  const DenseMatrix& var = enc.var.output;
  const DenseMatrix sd = var.cwiseSqrt();

  DenseMatrix z(tau * b, k);
  DenseMatrix x_rep(tau * b, xb.cols());
  for (Index t = 0; t < tau; ++t) {
    z.middleRows(t * b, b) = mu + sd.cwiseProduct(eps.middleRows(t * b, b));
    x_rep.middleRows(t * b, b) = xb;
  }
  const ForwardTrace dec = forward(model.decoder, z);
  DenseMatrix g_out;
  const double data = robust_data_loss_rows(x_rep, dec.output, cfg.alpha, &g_out);
  g_out *= inv_tau * inv_b;

  BatchLoss out;
  BackwardResult dec_back = backward(model.decoder, dec, g_out);
  out.grads.decoder = std::move(dec_back.params);

  // 2 KL = sum var + |mu|^2 - k - sum log var
  const double two_kl = var.sum() + mu.squaredNorm() - static_cast<double>(var.size()) -
                        var.array().log().sum();
  DenseMatrix g_mu = 2.0 * inv_b * mu;
  DenseMatrix g_var = inv_b * (1.0 - var.array().inverse()).matrix();
  for (Index t = 0; t < tau; ++t) {
    const auto gz = dec_back.input.middleRows(t * b, b);
    g_mu += gz;
    // dz/dvar = eps / (2 sd)
    g_var.array() += gz.array() * eps.middleRows(t * b, b).array() / (2.0 * sd.array());
  }
  backprop_encoder(model, enc, g_mu, &g_var, out.grads);

  out.objective = (data * inv_tau + two_kl) * inv_b;
  out.penalty = parameter_penalty(model, cfg.c1);
  return out;
}

BatchLoss vae_batch_loss(const GenerativeModel& model, const DenseMatrix& xb, const TrainConfig& cfg,
                         std::mt19937_64& engine) {
  const DenseMatrix eps = sample_gaussian(engine, xb.rows() * cfg.tau, model.latent_dim());
  return vae_batch_loss(model, xb, cfg, eps);
}

BatchLoss ae_batch_loss(const GenerativeModel& model, const DenseMatrix& xb, const TrainConfig& cfg) {
  if (model.kind == ModelKind::vae) throw std::invalid_argument("ae_batch_loss: model is a VAE");
  const Index b = xb.rows();
  if (b == 0) throw std::invalid_argument("ae_batch_loss: empty batch");
  const double inv_b = 1.0 / static_cast<double>(b);

  const EncoderPass enc = encode(model, xb);
  const DenseMatrix& mu = enc.mean.output;
  const ForwardTrace dec = forward(model.decoder, mu);
  DenseMatrix g_out;
  const double data = robust_data_loss_rows(xb, dec.output, cfg.alpha, &g_out);
  g_out *= inv_b;

  BatchLoss out;
  BackwardResult dec_back = backward(model.decoder, dec, g_out);
  out.grads.decoder = std::move(dec_back.params);

  double latent = 0.0;
  DenseMatrix g_mu = std::move(dec_back.input);
  if (model.kind == ModelKind::ae_l2) {
    latent = mu.squaredNorm();
    g_mu += (2.0 * cfg.c2 * inv_b) * mu;
  } else {
    latent = mu.cwiseAbs().sum();
    // subgradient 0 at 0
    g_mu += (cfg.c2 * inv_b) * mu.unaryExpr([](double v) { return double((v > 0.0) - (v < 0.0)); });
  }
  backprop_encoder(model, enc, g_mu, nullptr, out.grads);

  out.objective = (data + cfg.c2 * latent) * inv_b;
  out.penalty = parameter_penalty(model, cfg.c1);
  return out;
}

TrainHistory train(GenerativeModel& model, const DenseMatrix& x, const TrainConfig& cfg,
                   const DenseMatrix* truth) {
  cfg.validate();
  if (x.rows() != model.data_dim()) {
    std::ostringstream msg;
    msg << "train: data has " << x.rows() << " rows, model expects " << model.data_dim();
    throw std::invalid_argument(msg.str());
  }
  if (!all_finite(x)) throw std::invalid_argument("train: data contains non-finite entries");
  if (truth != nullptr && (truth->rows() != x.rows() || truth->cols() != x.cols())) {
    throw std::invalid_argument("train: ground truth shape differs from data");
  }

  const DenseMatrix xt = x.transpose();
  const auto n = static_cast<std::size_t>(xt.rows());
  const RngStream root(cfg.seed, "train");
  auto shuffle_eng = root.child("shuffle").engine();
  auto noise_eng = root.child("noise").engine();

  AdamConfig adam_cfg;
  adam_cfg.learning_rate = cfg.learning_rate;
  AdamState s_trunk(model.encoder_trunk, adam_cfg);
  AdamState s_mean(model.mean_head, adam_cfg);
  AdamState s_var(model.logvar_head, adam_cfg);
  AdamState s_dec(model.decoder, adam_cfg);

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  TrainHistory hist;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_eng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < n; begin += bs) {
      const std::size_t end = std::min(n, begin + bs);
      const DenseMatrix xb = gather_rows(xt, order, begin, end);
      BatchLoss loss = model.kind == ModelKind::vae ? vae_batch_loss(model, xb, cfg, noise_eng)
                                                    : ae_batch_loss(model, xb, cfg);
      if (!std::isfinite(loss.total())) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch + 1 << ", batch " << batches + 1;
        throw NumericError(msg.str());
      }
      sum += loss.total();
      ++batches;
      adam_step(s_trunk, model.encoder_trunk, loss.grads.trunk, cfg.c1);
      adam_step(s_mean, model.mean_head, loss.grads.mean_head, cfg.c1);
      adam_step(s_var, model.logvar_head, loss.grads.logvar_head, cfg.c1);
      adam_step(s_dec, model.decoder, loss.grads.decoder, cfg.c1);
    }
    hist.objective.push_back(sum / static_cast<double>(batches));
    if (truth != nullptr) hist.nmse.push_back(nmse_of(*truth, reconstruct(model, x)));
    hist.seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return hist;
}

DenseMatrix encode_mean(const GenerativeModel& model, const DenseMatrix& x) {
  const DenseMatrix h = predict(model.encoder_trunk, x.transpose());
  return predict(model.mean_head, h).transpose();
}

DenseMatrix encode_var(const GenerativeModel& model, const DenseMatrix& x) {
  if (model.kind != ModelKind::vae) throw std::invalid_argument("encode_var: model is not a VAE");
  const DenseMatrix h = predict(model.encoder_trunk, x.transpose());
  return predict(model.logvar_head, h).transpose();
}

DenseMatrix reconstruct(const GenerativeModel& model, const DenseMatrix& x) {
  const DenseMatrix h = predict(model.encoder_trunk, x.transpose());
  return predict(model.decoder, predict(model.mean_head, h)).transpose();
}

}  // namespace vaelab

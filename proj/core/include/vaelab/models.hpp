#pragma once

// VAE and regularized-AE objectives with the decoder covariance optimized out
// per element, plus the minibatch training loop.

#include "vaelab/diffnet.hpp"
#include "vaelab/numkit.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vaelab {

enum class ModelKind { vae, ae_l2, ae_l1 };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Encoder mean net = trunk followed by mean_head; the VAE variance head reads
/// the same trunk output. The trunk holds at most the first two hidden layers.
struct GenerativeModel {
  MlpNet encoder_trunk;
  MlpNet mean_head;
  MlpNet logvar_head;  // outputs the variance directly (exponential layer); empty for AEs
  MlpNet decoder;
  ModelKind kind = ModelKind::vae;

  Index data_dim() const { return decoder.output_dim(); }
  Index latent_dim() const { return decoder.input_dim(); }
};

struct Architecture {
  Index data_dim = 0;
  Index latent_dim = 0;
  std::vector<Index> encoder_hidden;  // N_e widths
  std::vector<Index> decoder_hidden;  // N_d widths
};

/// He-initialized model; throws std::invalid_argument on inconsistent sizes.
GenerativeModel make_model(ModelKind kind, const Architecture& arch, const RngStream& stream);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 100;
  double learning_rate = 1e-4;
  int tau = 1;
  double alpha = 1e-6;
  double c1 = 5e-4;
  double c2 = 1e3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> objective;  // epoch mean of the batch objective (penalty included)
  std::vector<double> nmse;       // empty when no ground truth was supplied
  std::vector<double> seconds;
};

/// max(c - alpha, 0) + alpha.
double xi_alpha(double c, double alpha);

/// sum_j c_j / xi(c_j) + log xi(c_j), c_j = (x_j - mu_j)^2.
double robust_data_loss(const Vector& x, const Vector& mu, double alpha);

/// Row-wise robust loss summed over all rows of x (batch x d). When grad_mu
/// is non-null it receives dLoss/dmu; at c = alpha the c < alpha branch is used.
double robust_data_loss_rows(const DenseMatrix& x, const DenseMatrix& mu, double alpha,
                             DenseMatrix* grad_mu);

/// Exact KL(N(mu, diag var) || N(0, I)) including the -kappa constant.
double kl_diag_gaussian(const Vector& mu, const Vector& var);

struct ModelGradients {
  Gradients trunk;
  Gradients mean_head;
  Gradients logvar_head;
  Gradients decoder;
};

struct BatchLoss {
  double objective = 0.0;  // batch mean of the data + latent terms
  double penalty = 0.0;    // C1 * squared parameter norm
  ModelGradients grads;    // gradient of `objective` only; adam_step adds the penalty part

  double total() const { return objective + penalty; }
};

/// The loss is twice the negative ELBO: the Gaussian likelihood enters as
/// quadratic + log-det without the 1/2, so the KL enters as 2 * KL.
/// `eps` stacks tau blocks of batch x latent standard normals.
BatchLoss vae_batch_loss(const GenerativeModel& model, const DenseMatrix& xb, const TrainConfig& cfg,
                         const DenseMatrix& eps);
BatchLoss vae_batch_loss(const GenerativeModel& model, const DenseMatrix& xb, const TrainConfig& cfg,
                         std::mt19937_64& engine);

/// VAE data + 2 KL term evaluated from given posterior moments (batch mean).
/// Used where the variance must go below what the variance head can emit.
double vae_loss_from_moments(const MlpNet& decoder, const DenseMatrix& xb, const DenseMatrix& mu,
                             const DenseMatrix& var, const DenseMatrix& eps, double alpha);

BatchLoss ae_batch_loss(const GenerativeModel& model, const DenseMatrix& xb, const TrainConfig& cfg);

double parameter_penalty(const GenerativeModel& model, double c1);

/// Trains in place. X is d x n (one sample per column); `truth` (d x n), when
/// given, is scored by NMSE after every epoch.
TrainHistory train(GenerativeModel& model, const DenseMatrix& x, const TrainConfig& cfg,
                   const DenseMatrix* truth = nullptr);

/// Encoder means for every column of x: latent x n.
DenseMatrix encode_mean(const GenerativeModel& model, const DenseMatrix& x);
/// Encoder variances for every column of x: latent x n (VAE only).
DenseMatrix encode_var(const GenerativeModel& model, const DenseMatrix& x);
/// decoder(encoder_mean(x)) columnwise: d x n.
DenseMatrix reconstruct(const GenerativeModel& model, const DenseMatrix& x);

}  // namespace vaelab

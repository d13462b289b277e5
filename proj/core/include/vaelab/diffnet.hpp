#pragma once

// Feedforward networks with exact reverse-mode gradients and Adam.

#include "vaelab/numkit.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace vaelab {

enum class Activation { relu, identity, exponential };

/// Log-variance clamp applied by the exponential activation before exp().
inline constexpr double kExpClampLow = -20.0;
inline constexpr double kExpClampHigh = 5.0;

struct Layer {
  DenseMatrix weight;  // out x in
  Vector bias;         // out
  Activation activation = Activation::identity;
};

/// Ordered list of affine layers, each followed by its activation. A net with
/// no layers is the identity map on its input dimension.
///
/// Every mutation through mutable_layers() stamps the net with a fresh global
/// version, which lets backward() reject traces recorded before the change.
class MlpNet {
 public:
  explicit MlpNet(Index input_dim = 0);
  explicit MlpNet(std::vector<Layer> layers);

  /// He-initialized net: weights ~ N(0, 2/fan_in), biases 0. `dims` lists
  /// every width from input to output; all but the last layer use `hidden`.
  static MlpNet he_init(std::span<const Index> dims, Activation hidden, Activation output,
                        std::mt19937_64& engine);

  Index input_dim() const { return input_dim_; }
  Index output_dim() const;
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& mutable_layers();

  std::uint64_t stamp() const { return stamp_; }
  /// Marks parameters as changed after writing through raw pointers.
  void touch();

  Index parameter_count() const;
  double squared_norm() const;

 private:
  void validate() const;

  Index input_dim_;
  std::vector<Layer> layers_;
  std::uint64_t stamp_;
};

struct ForwardTrace {
  std::uint64_t stamp = 0;
  std::vector<DenseMatrix> inputs;  // input seen by each layer
  std::vector<DenseMatrix> pre;     // pre-activation of each layer
  DenseMatrix output;
};

struct LayerGrad {
  DenseMatrix weight;
  Vector bias;
};

/// Parameter-shaped gradient (or moment) buffer.
struct Gradients {
  std::vector<LayerGrad> layers;

  static Gradients zeros_like(const MlpNet& net);
  void add(const Gradients& other, double scale = 1.0);
  void scale(double factor);
  double max_abs() const;
};

struct BackwardResult {
  Gradients params;
  DenseMatrix input;  // dLoss/dInput, batch x in
};

/// x is batch x input_dim. Throws std::invalid_argument naming the layer on
/// any dimension mismatch.
ForwardTrace forward(const MlpNet& net, const DenseMatrix& x);

/// Output only; no trace kept.
DenseMatrix predict(const MlpNet& net, const DenseMatrix& x);

/// Reverse pass for grad_out = dLoss/dOutput (batch x output_dim). ReLU uses
/// subgradient 0 at exactly 0; the exponential activation passes exp of the
/// clamped value (straight-through outside the clamp range).
BackwardResult backward(const MlpNet& net, const ForwardTrace& trace, const DenseMatrix& grad_out);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState(const MlpNet& net, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  std::int64_t step() const { return step_; }

 private:
  friend void adam_step(AdamState&, MlpNet&, const Gradients&, double);

  AdamConfig config_;
  Gradients first_;
  Gradients second_;
  std::int64_t step_ = 0;
};

/// One bias-corrected Adam update. The weight-decay penalty
/// weight_decay * ||theta||^2 contributes 2 * weight_decay * theta to the
/// gradient before the moments are updated.
void adam_step(AdamState& state, MlpNet& net, const Gradients& grads, double weight_decay);

/// Loss of a net output: returns the scalar and writes dLoss/dOutput.
using OutputLoss = std::function<double(const DenseMatrix& output, DenseMatrix& grad_output)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  /// Some ReLU pre-activation was within 1e-4 of the kink; the result is
  /// unreliable and the caller should draw another probe.
  bool near_kink = false;
};

/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|), maximized over
/// every parameter, with central differences of step h.
GradCheckResult grad_check(const MlpNet& net, const OutputLoss& loss, const DenseMatrix& x,
                           double h = 1e-5);

/// Same comparison for an objective spanning several nets. `objective` must
/// recompute the scalar from the current parameters of `nets`.
double check_parameter_gradients(std::span<MlpNet* const> nets,
                                 std::span<const Gradients> analytic,
                                 const std::function<double()>& objective, double h = 1e-5);

/// True when any ReLU pre-activation in the trace has |a| < margin.
bool near_relu_kink(const MlpNet& net, const ForwardTrace& trace, double margin = 1e-4);

}  // namespace vaelab

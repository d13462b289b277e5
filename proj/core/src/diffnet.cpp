#include "vaelab/diffnet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace vaelab {
namespace {

std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

double clamp_log(double a) { return std::clamp(a, kExpClampLow, kExpClampHigh); }

DenseMatrix activate(Activation act, const DenseMatrix& pre) {
  switch (act) {
    case Activation::relu:
      return pre.cwiseMax(0.0);
    case Activation::identity:
      return pre;
    case Activation::exponential:
      return pre.unaryExpr([](double a) { return std::exp(clamp_log(a)); });
  }
  return pre;
}

// dOut/dPre applied elementwise to the upstream gradient.
DenseMatrix activation_backward(Activation act, const DenseMatrix& pre, const DenseMatrix& out,
                                const DenseMatrix& grad) {
  switch (act) {
    case Activation::relu:
      return grad.binaryExpr(pre, [](double g, double a) { return a > 0.0 ? g : 0.0; });
    case Activation::identity:
      return grad;
    case Activation::exponential:
      return grad.cwiseProduct(out);
  }
  return grad;
}

// Visits every scalar parameter of a net in a fixed order.
template <typename Fn>
void for_each_parameter(MlpNet& net, Fn&& fn) {
  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (Index i = 0; i < layers[l].weight.size(); ++i) fn(layers[l].weight.data()[i]);
    for (Index i = 0; i < layers[l].bias.size(); ++i) fn(layers[l].bias.data()[i]);
  }
}

template <typename Fn>
void for_each_gradient(const Gradients& g, Fn&& fn) {
  for (const auto& lg : g.layers) {
    for (Index i = 0; i < lg.weight.size(); ++i) fn(lg.weight.data()[i]);
    for (Index i = 0; i < lg.bias.size(); ++i) fn(lg.bias.data()[i]);
  }
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

}  // namespace

MlpNet::MlpNet(Index input_dim) : input_dim_(input_dim), stamp_(next_stamp()) {}

MlpNet::MlpNet(std::vector<Layer> layers)
    : input_dim_(layers.empty() ? 0 : layers.front().weight.cols()),
      layers_(std::move(layers)),
      stamp_(next_stamp()) {
  validate();
}

MlpNet MlpNet::he_init(std::span<const Index> dims, Activation hidden, Activation output,
                       std::mt19937_64& engine) {
  if (dims.empty()) throw std::invalid_argument("he_init: at least the input dimension is required");
  if (dims.size() == 1) return MlpNet(dims[0]);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index in = dims[l];
    const Index out = dims[l + 1];
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    Layer layer;
    layer.weight.resize(out, in);
    for (Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = normal(engine);
    layer.bias = Vector::Zero(out);
    layer.activation = (l + 2 == dims.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return MlpNet(std::move(layers));
}

Index MlpNet::output_dim() const {
  return layers_.empty() ? input_dim_ : layers_.back().weight.rows();
}

std::vector<Layer>& MlpNet::mutable_layers() {
  stamp_ = next_stamp();
  return layers_;
}

void MlpNet::touch() { stamp_ = next_stamp(); }

Index MlpNet::parameter_count() const {
  Index count = 0;
  for (const auto& l : layers_) count += l.weight.size() + l.bias.size();
  return count;
}

double MlpNet::squared_norm() const {
  double total = 0.0;
  for (const auto& l : layers_) total += l.weight.squaredNorm() + l.bias.squaredNorm();
  return total;
}

void MlpNet::validate() const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows()) {
      std::ostringstream msg;
      msg << "MlpNet: layer " << l << " bias has " << layer.bias.size() << " entries, weight has "
          << layer.weight.rows() << " rows";
      throw std::invalid_argument(msg.str());
    }
    if (l > 0 && layers_[l - 1].weight.rows() != layer.weight.cols()) {
      std::ostringstream msg;
      msg << "MlpNet: layer " << l - 1 << " outputs " << layers_[l - 1].weight.rows()
          << " values but layer " << l << " expects " << layer.weight.cols();
      throw std::invalid_argument(msg.str());
    }
  }
}

Gradients Gradients::zeros_like(const MlpNet& net) {
  Gradients g;
  g.layers.reserve(net.depth());
  for (const auto& l : net.layers()) {
    g.layers.push_back({DenseMatrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  }
  return g;
}

void Gradients::add(const Gradients& other, double scale) {
  if (other.layers.size() != layers.size()) throw std::invalid_argument("Gradients::add: depth mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += scale * other.layers[l].weight;
    layers[l].bias += scale * other.layers[l].bias;
  }
}

void Gradients::scale(double factor) {
  for (auto& l : layers) {
    l.weight *= factor;
    l.bias *= factor;
  }
}

double Gradients::max_abs() const {
  double m = 0.0;
  for_each_gradient(*this, [&](double v) { m = std::max(m, std::abs(v)); });
  return m;
}

ForwardTrace forward(const MlpNet& net, const DenseMatrix& x) {
  if (x.cols() != net.input_dim()) {
    std::ostringstream msg;
    msg << "forward: input has " << x.cols() << " columns but layer 0 expects " << net.input_dim();
    throw std::invalid_argument(msg.str());
  }
  ForwardTrace trace;
  trace.stamp = net.stamp();
  trace.inputs.reserve(net.depth());
  trace.pre.reserve(net.depth());
  DenseMatrix current = x;
  for (const auto& layer : net.layers()) {
    DenseMatrix pre = current * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    DenseMatrix next = activate(layer.activation, pre);
    trace.inputs.push_back(std::move(current));
    trace.pre.push_back(std::move(pre));
    current = std::move(next);
  }
  trace.output = std::move(current);
  return trace;
}

DenseMatrix predict(const MlpNet& net, const DenseMatrix& x) {
  if (x.cols() != net.input_dim()) {
    std::ostringstream msg;
    msg << "predict: input has " << x.cols() << " columns but layer 0 expects " << net.input_dim();
    throw std::invalid_argument(msg.str());
  }
  DenseMatrix current = x;
  for (const auto& layer : net.layers()) {
    DenseMatrix pre = current * layer.weight.transpose();
    pre.rowwise() += layer.bias.transpose();
    current = activate(layer.activation, pre);
  }
  return current;
}

BackwardResult backward(const MlpNet& net, const ForwardTrace& trace, const DenseMatrix& grad_out) {
  if (trace.stamp != net.stamp() || trace.pre.size() != net.depth()) {
    throw std::logic_error("backward: trace was recorded for different or since-modified parameters");
  }
  if (grad_out.rows() != trace.output.rows() || grad_out.cols() != trace.output.cols()) {
    std::ostringstream msg;
    msg << "backward: grad_out is " << grad_out.rows() << "x" << grad_out.cols() << ", output is "
        << trace.output.rows() << "x" << trace.output.cols();
    throw std::invalid_argument(msg.str());
  }
  BackwardResult result;
  result.params.layers.resize(net.depth());
  DenseMatrix grad = grad_out;
  for (std::size_t k = net.depth(); k-- > 0;) {
    const auto& layer = net.layers()[k];
    const DenseMatrix& out = (k + 1 < net.depth()) ? trace.inputs[k + 1] : trace.output;
    DenseMatrix grad_pre = activation_backward(layer.activation, trace.pre[k], out, grad);
    result.params.layers[k].weight = grad_pre.transpose() * trace.inputs[k];
    result.params.layers[k].bias = grad_pre.colwise().sum().transpose();
    grad = grad_pre * layer.weight;
  }
  result.input = std::move(grad);
  return result;
}

AdamState::AdamState(const MlpNet& net, AdamConfig config)
    : config_(config), first_(Gradients::zeros_like(net)), second_(Gradients::zeros_like(net)) {}

void adam_step(AdamState& state, MlpNet& net, const Gradients& grads, double weight_decay) {
  if (grads.layers.size() != net.depth() || state.first_.layers.size() != net.depth()) {
    throw std::invalid_argument("adam_step: gradient/state depth does not match the net");
  }
  const AdamConfig& c = state.config_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    for (Index i = 0; i < param.size(); ++i) {
      const double gi = g.data()[i] + 2.0 * weight_decay * param.data()[i];
      double& mi = m.data()[i];
      double& vi = v.data()[i];
      mi = c.beta1 * mi + (1.0 - c.beta1) * gi;
      vi = c.beta2 * vi + (1.0 - c.beta2) * gi * gi;
      const double mhat = mi / correction1;
      const double vhat = vi / correction2;
      param.data()[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  };

  auto& layers = net.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.layers[l].weight.rows() != layers[l].weight.rows() ||
        grads.layers[l].weight.cols() != layers[l].weight.cols() ||
        grads.layers[l].bias.size() != layers[l].bias.size()) {
      throw std::invalid_argument("adam_step: gradient shape does not match layer " + std::to_string(l));
    }
    update(layers[l].weight, grads.layers[l].weight, state.first_.layers[l].weight,
           state.second_.layers[l].weight);
    update(layers[l].bias, grads.layers[l].bias, state.first_.layers[l].bias,
           state.second_.layers[l].bias);
  }
}

bool near_relu_kink(const MlpNet& net, const ForwardTrace& trace, double margin) {
  for (std::size_t l = 0; l < net.depth(); ++l) {
    if (net.layers()[l].activation != Activation::relu) continue;
    if ((trace.pre[l].array().abs() < margin).any()) return true;
  }
  return false;
}

double check_parameter_gradients(std::span<MlpNet* const> nets,
                                 std::span<const Gradients> analytic,
                                 const std::function<double()>& objective, double h) {
  if (nets.size() != analytic.size()) {
    throw std::invalid_argument("check_parameter_gradients: one gradient set per net required");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < nets.size(); ++k) {
    std::vector<double> flat;
    for_each_gradient(analytic[k], [&](double v) { flat.push_back(v); });
    std::size_t idx = 0;
    // Perturb in place; every write is followed by touch() through for_each_parameter.
    std::vector<double*> params;
    for_each_parameter(*nets[k], [&](double& p) { params.push_back(&p); });
    if (params.size() != flat.size()) {
      throw std::invalid_argument("check_parameter_gradients: gradient shape does not match net");
    }
    for (double* p : params) {
      const double saved = *p;
      *p = saved + h;
      nets[k]->touch();
      const double plus = objective();
      *p = saved - h;
      nets[k]->touch();
      const double minus = objective();
      *p = saved;
      nets[k]->touch();
      const double numeric = (plus - minus) / (2.0 * h);
      worst = std::max(worst, relative_error(flat[idx++], numeric));
    }
  }
  return worst;
}

GradCheckResult grad_check(const MlpNet& net, const OutputLoss& loss, const DenseMatrix& x, double h) {
  MlpNet probe = net;
  const ForwardTrace trace = forward(probe, x);
  GradCheckResult result;
  result.near_kink = near_relu_kink(probe, trace);
  DenseMatrix grad_out;
  loss(trace.output, grad_out);
  const BackwardResult back = backward(probe, trace, grad_out);

  MlpNet* nets[] = {&probe};
  const Gradients grads[] = {back.params};
  result.max_relative_error = check_parameter_gradients(
      nets, grads,
      [&]() {
        DenseMatrix unused;
        return loss(predict(probe, x), unused);
      },
      h);
  return result;
}

}  // namespace vaelab

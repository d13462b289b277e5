#include "vaelab/diffnet.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace vaelab;

namespace {

MlpNet small_net(std::uint64_t seed, Activation out = Activation::identity) {
  auto eng = RngStream(seed, "net").engine();
  const Index dims[] = {4, 6, 5, 3};
  return MlpNet::he_init(dims, Activation::relu, out, eng);
}

double squared_loss(const DenseMatrix& out, DenseMatrix& grad) {
  grad = 2.0 * out;
  return out.squaredNorm();
}

}  // namespace

TEST(MlpNet, ForwardMatchesHandComputation) {
  Layer l1{DenseMatrix(2, 2), Vector(2), Activation::relu};
  l1.weight << 1.0, -1.0, 2.0, 0.5;
  l1.bias << 0.0, -1.0;
  Layer l2{DenseMatrix(1, 2), Vector(1), Activation::exponential};
  l2.weight << 1.0, 1.0;
  l2.bias << 0.0;
  const MlpNet net({l1, l2});
  DenseMatrix x(2, 2);
  x << 1.0, 2.0, 3.0, 0.0;
  // row 0: h = relu([-1, 2]) -> exp(2); row 1: h = relu([3, 5]) -> exp(8), clamped to exp(5)
  const DenseMatrix y = predict(net, x);
  EXPECT_NEAR(y(0, 0), std::exp(2.0), 1e-12);
  EXPECT_NEAR(y(1, 0), std::exp(5.0), 1e-9);
}

TEST(MlpNet, EmptyNetIsIdentity) {
  const MlpNet net(3);
  const DenseMatrix x = sample_gaussian(RngStream(1, "x"), 4, 3);
  EXPECT_EQ(predict(net, x), x);
  EXPECT_EQ(net.output_dim(), 3);
}

TEST(MlpNet, HeInitVarianceAndZeroBias) {
  auto eng = RngStream(2, "he").engine();
  const Index dims[] = {400, 300};
  const MlpNet net = MlpNet::he_init(dims, Activation::relu, Activation::identity, eng);
  const auto& w = net.layers()[0].weight;
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  EXPECT_NEAR(var, 2.0 / 400.0, 0.05 * 2.0 / 400.0);
  EXPECT_EQ(net.layers()[0].bias.squaredNorm(), 0.0);
  EXPECT_EQ(net.layers()[0].activation, Activation::identity);
}

TEST(MlpNet, ForwardRejectsWrongInputWidth) {
  const MlpNet net = small_net(3);
  EXPECT_THROW(forward(net, DenseMatrix::Zero(2, 5)), std::invalid_argument);
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const MlpNet net = small_net(seed);
    const DenseMatrix x = sample_gaussian(RngStream(seed, "x"), 7, 4);
    const GradCheckResult r = grad_check(net, squared_loss, x);
    if (r.near_kink) continue;
    EXPECT_LT(r.max_relative_error, 1e-6) << "seed " << seed;
  }
}

TEST(Backward, ExponentialOutputMatchesFiniteDifferences) {
  const MlpNet net = small_net(7, Activation::exponential);
  const DenseMatrix x = 0.3 * sample_gaussian(RngStream(7, "x"), 5, 4);
  const GradCheckResult r = grad_check(net, squared_loss, x);
  ASSERT_FALSE(r.near_kink);
  EXPECT_LT(r.max_relative_error, 1e-6);
}

TEST(Backward, InputGradientMatchesFiniteDifferences) {
  const MlpNet net = small_net(8);
  DenseMatrix x = sample_gaussian(RngStream(8, "x"), 3, 4);
  const ForwardTrace tr = forward(net, x);
  DenseMatrix g;
  squared_loss(tr.output, g);
  const DenseMatrix analytic = backward(net, tr, g).input;
  const double h = 1e-6;
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      DenseMatrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double num = (predict(net, xp).squaredNorm() - predict(net, xm).squaredNorm()) / (2 * h);
      EXPECT_NEAR(analytic(i, j), num, 1e-6 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST(Backward, RejectsTraceFromBeforeMutation) {
  MlpNet net = small_net(9);
  const DenseMatrix x = sample_gaussian(RngStream(9, "x"), 2, 4);
  const ForwardTrace tr = forward(net, x);
  net.mutable_layers()[0].bias(0) += 1.0;
  EXPECT_THROW(backward(net, tr, DenseMatrix::Ones(2, 3)), std::logic_error);
}

TEST(Adam, FirstStepMovesBySignedLearningRate) {
  MlpNet net = small_net(10);
  const MlpNet before = net;
  Gradients g = Gradients::zeros_like(net);
  g.layers[0].weight.setConstant(0.5);
  g.layers[1].bias.setConstant(-2.0);
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState state(net, cfg);
  adam_step(state, net, g, 0.0);
  // Bias correction makes m_hat = g, v_hat = g^2 after one step.
  const double step_w = 0.01 * 0.5 / (0.5 + 1e-8);
  const double step_b = 0.01 * 2.0 / (2.0 + 1e-8);
  EXPECT_NEAR((before.layers()[0].weight - net.layers()[0].weight).maxCoeff(), step_w, 1e-15);
  EXPECT_NEAR((before.layers()[0].weight - net.layers()[0].weight).minCoeff(), step_w, 1e-15);
  EXPECT_NEAR((net.layers()[1].bias - before.layers()[1].bias).minCoeff(), step_b, 1e-15);
  EXPECT_EQ(net.layers()[2].weight, before.layers()[2].weight);
  EXPECT_EQ(state.step(), 1);
}

TEST(Adam, WeightDecayAddsTwiceDecayTimesTheta) {
  MlpNet a = small_net(11);
  MlpNet b = a;
  const double wd = 0.3;
  Gradients explicit_grad = Gradients::zeros_like(a);
  for (std::size_t l = 0; l < a.depth(); ++l) {
    explicit_grad.layers[l].weight = 2.0 * wd * a.layers()[l].weight;
    explicit_grad.layers[l].bias = 2.0 * wd * a.layers()[l].bias;
  }
  AdamState sa(a, {}), sb(b, {});
  adam_step(sa, a, Gradients::zeros_like(a), wd);
  adam_step(sb, b, explicit_grad, 0.0);
  for (std::size_t l = 0; l < a.depth(); ++l) EXPECT_EQ(a.layers()[l].weight, b.layers()[l].weight);
}

TEST(Adam, MinimizesQuadratic) {
  MlpNet net = small_net(12);
  const DenseMatrix x = sample_gaussian(RngStream(12, "x"), 16, 4);
  AdamConfig cfg;
  cfg.learning_rate = 1e-2;
  AdamState state(net, cfg);
  const double start = predict(net, x).squaredNorm();
  for (int i = 0; i < 300; ++i) {
    const ForwardTrace tr = forward(net, x);
    adam_step(state, net, backward(net, tr, 2.0 * tr.output).params, 0.0);
  }
  EXPECT_LT(predict(net, x).squaredNorm(), 1e-3 * start);
}

TEST(NearReluKink, FlagsSmallPreactivations) {
  Layer l1{DenseMatrix::Identity(2, 2), Vector::Zero(2), Activation::relu};
  const MlpNet net({l1});
  DenseMatrix x(1, 2);
  x << 1e-6, 1.0;
  EXPECT_TRUE(near_relu_kink(net, forward(net, x)));
  x << 0.5, 1.0;
  EXPECT_FALSE(near_relu_kink(net, forward(net, x)));
}

TEST(CheckParameterGradients, DetectsWrongGradient) {
  MlpNet net = small_net(13);
  const DenseMatrix x = sample_gaussian(RngStream(13, "x"), 4, 4);
  const ForwardTrace tr = forward(net, x);
  Gradients g = backward(net, tr, 2.0 * tr.output).params;
  MlpNet* nets[] = {&net};
  auto objective = [&] { return predict(net, x).squaredNorm(); };
  EXPECT_LT(check_parameter_gradients(nets, std::span<const Gradients>(&g, 1), objective), 1e-6);
  g.layers[0].weight(0, 0) += 1.0;
  EXPECT_GT(check_parameter_gradients(nets, std::span<const Gradients>(&g, 1), objective), 1e-2);
}

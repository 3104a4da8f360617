// Dense network engine: shapes, forward semantics, exact gradients,
// optimizers and checkpoint round trips.

#include <gtest/gtest.h>

#include <cmath>

#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/nn/checkpoint.hpp"
#include "mcdsvdd/nn/grad_check.hpp"
#include "mcdsvdd/nn/network.hpp"
#include "mcdsvdd/nn/optimizer.hpp"

using namespace mcdsvdd;
using namespace mcdsvdd::nn;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// 0.5 * |output - target|^2 summed over the batch.
DifferentiableLoss squared_error(const Matrix& target, Mode mode = Mode::training) {
  return [target, mode](const DenseNetwork& net, const Matrix& batch) {
    auto pass = evaluate(net, batch, mode);
    const Matrix diff = pass.output - target;
    return std::make_pair(0.5 * diff.squaredNorm(), backward(net, pass.cache, diff));
  };
}

// Randomizes bn affine terms so their gradients are non-trivial.
void perturb_bn(DenseNetwork& net, Rng& rng) {
  for (auto& l : net.mutable_layers()) {
    if (!l.spec.batch_norm) continue;
    for (Eigen::Index i = 0; i < l.bn_scale.size(); ++i) {
      l.bn_scale(i) = 1.0 + 0.3 * rng.normal();
      l.bn_shift(i) = 0.3 * rng.normal();
      l.bias(i) = 0.1 * rng.normal();
      l.running_mean(i) = 0.2 * rng.normal();
      l.running_var(i) = 0.5 + rng.uniform();
    }
  }
}

}  // namespace

TEST(InitNetwork, ShapesAndDeterminism) {
  const auto net = init_network({{4, 2, Activation::identity, false}}, 1);
  EXPECT_EQ(net.layers()[0].weight.rows(), 2);
  EXPECT_EQ(net.layers()[0].weight.cols(), 4);
  EXPECT_EQ(net.layers()[0].bias.size(), 2);
  EXPECT_TRUE(net.layers()[0].bias.isZero());
  EXPECT_EQ(init_network({{4, 2, Activation::identity, false}}, 1), net);
  EXPECT_FALSE(init_network({{4, 2, Activation::identity, false}}, 2) == net);
  EXPECT_THROW(init_network({{4, 3, Activation::tanh, false}, {2, 1, Activation::tanh, false}}, 0), ShapeError);
}

TEST(InitNetwork, FanInStandardDeviation) {
  const auto net = init_network({{512, 200, Activation::identity, true}}, 7);  // 102400 draws
  const auto& w = net.layers()[0].weight;
  const double mean = w.mean();
  const double sd = std::sqrt((w.array() - mean).square().sum() / static_cast<double>(w.size() - 1));
  const double nominal = 1.0 / std::sqrt(512.0);
  EXPECT_LT(std::abs(sd - nominal) / nominal, 0.2);
  EXPECT_LT(std::abs(mean), 0.01 * nominal * 10);
  EXPECT_TRUE(net.layers()[0].bn_scale.isOnes());
  EXPECT_TRUE(net.layers()[0].bn_shift.isZero());
}

TEST(Forward, IdentityLayer) {
  DenseNetwork net({{3, 3, Activation::identity, false}});
  net.mutable_layers()[0].weight = Matrix::Identity(3, 3);
  Rng rng(1);
  const Matrix x = random_matrix(5, 3, rng);
  EXPECT_EQ(infer(net, x), x);
}

TEST(Forward, TanhOutputRange) {
  auto net = init_network({{3, 8, Activation::leaky_relu, true}, {8, 2, Activation::tanh, false}}, 4);
  Rng rng(2);
  const Matrix x = 50.0 * random_matrix(20, 3, rng);
  const Matrix y = forward(net, x, Mode::training).output;
  EXPECT_TRUE((y.array() > -1.0).all() && (y.array() < 1.0).all());
}

TEST(Forward, HandEvaluatedLeakyRelu) {
  DenseNetwork net({{2, 2, Activation::leaky_relu, false}});
  auto& l = net.mutable_layers()[0];
  l.weight << 1.0, 2.0, -1.0, 0.5;
  l.bias << 0.3, -0.2;
  Matrix x(1, 2);
  x << 1.0, -1.0;
  // z = (1 - 2 + 0.3, -1 - 0.5 - 0.2) = (-0.7, -1.7); leaky -> (-0.007, -0.017)
  const Matrix y = infer(net, x);
  EXPECT_DOUBLE_EQ(y(0, 0), -0.7 * 0.01);
  EXPECT_DOUBLE_EQ(y(0, 1), -1.7 * 0.01);
  l.weight << -1.0, 0.0, 0.0, 1.0;
  l.bias << 2.0, 0.0;
  const Matrix y2 = infer(net, x);  // z = (1, -1)
  EXPECT_DOUBLE_EQ(y2(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y2(0, 1), -0.01);
}

TEST(Forward, BatchNormNeedsTwoRowsInTraining) {
  auto net = init_network({{2, 2, Activation::leaky_relu, true}}, 0);
  EXPECT_THROW(forward(net, Matrix::Ones(1, 2), Mode::training), BatchSizeError);
  EXPECT_NO_THROW(forward(net, Matrix::Ones(1, 2), Mode::inference));
}

TEST(Forward, InferenceIsPure) {
  auto net = init_network({{4, 6, Activation::leaky_relu, true}, {6, 3, Activation::tanh, false}}, 3);
  Rng rng(3);
  const Matrix x = random_matrix(7, 4, rng);
  forward(net, x, Mode::training);
  const Matrix a = infer(net, x);
  const Matrix b = infer(net, x);
  EXPECT_EQ(a, b);
}

TEST(Forward, RunningMeanConvergesMonotonically) {
  auto net = init_network({{3, 4, Activation::identity, true}}, 9);
  Rng rng(4);
  const Matrix x = random_matrix(16, 3, rng) + Matrix::Constant(16, 3, 2.0);
  Matrix z = x * net.layers()[0].weight.transpose();
  const Vector batch_mean = z.colwise().mean().transpose();
  double prev = (net.layers()[0].running_mean - batch_mean).norm();
  for (int k = 0; k < 60; ++k) {
    forward(net, x, Mode::training);
    const double gap = (net.layers()[0].running_mean - batch_mean).norm();
    EXPECT_LT(gap, prev);
    prev = gap;
  }
  EXPECT_LT(prev, 1e-2);
  EXPECT_TRUE((net.layers()[0].running_var.array() >= 0.0).all());
}

TEST(Backward, ZeroOutputGradient) {
  auto net = init_network({{3, 5, Activation::leaky_relu, true}, {5, 2, Activation::tanh, false}}, 1);
  Rng rng(5);
  const Matrix x = random_matrix(6, 3, rng);
  const auto pass = evaluate(net, x, Mode::training);
  const auto g = backward(net, pass.cache, Matrix::Zero(6, 2));
  for (const auto& t : g.tensors) EXPECT_TRUE(t.isZero());
  EXPECT_TRUE(g.input.isZero());
}

TEST(Backward, LinearLeastSquaresClosedForm) {
  auto net = init_network({{4, 3, Activation::identity, false}}, 2);
  Rng rng(6);
  const Matrix x = random_matrix(10, 4, rng);
  const Matrix y = random_matrix(10, 3, rng);
  const auto [loss, g] = squared_error(y)(net, x);
  (void)loss;
  const auto& l = net.layers()[0];
  Matrix residual = x * l.weight.transpose();
  residual.rowwise() += l.bias.transpose();
  residual -= y;
  EXPECT_LT((g.tensors[0] - residual.transpose() * x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((g.tensors[1] - residual.colwise().sum().transpose()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((g.input - residual * l.weight).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, StaleCacheRejected) {
  auto net = init_network({{2, 2, Activation::tanh, false}}, 1);
  const auto pass = evaluate(net, Matrix::Ones(3, 2), Mode::inference);
  net.mutable_layers()[0].weight(0, 0) += 1.0;
  EXPECT_THROW(backward(net, pass.cache, Matrix::Ones(3, 2)), CacheError);
  auto other = init_network({{2, 2, Activation::tanh, false}}, 1);
  EXPECT_THROW(backward(other, pass.cache, Matrix::Ones(3, 2)), CacheError);
}

TEST(GradCheck, LinearSquaredError) {
  auto net = init_network({{5, 3, Activation::identity, false}}, 3);
  Rng rng(7);
  const Matrix x = random_matrix(8, 5, rng);
  const auto r = grad_check(net, squared_error(random_matrix(8, 3, rng)), x, 1e-7);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " " << r.worst_tensor;
  EXPECT_LT(r.max_relative_error, 1e-7);
}

TEST(GradCheck, BatchNormTrainingMode) {
  auto net = init_network({{4, 6, Activation::leaky_relu, true}, {6, 5, Activation::tanh, true},
                           {5, 2, Activation::identity, false}},
                          4);
  Rng rng(8);
  perturb_bn(net, rng);
  const Matrix x = random_matrix(9, 4, rng);
  const auto r = grad_check(net, squared_error(random_matrix(9, 2, rng)), x, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " " << r.worst_tensor;
}

TEST(GradCheck, BatchNormInferenceMode) {
  auto net = init_network({{3, 4, Activation::leaky_relu, true}, {4, 2, Activation::tanh, false}}, 5);
  Rng rng(9);
  perturb_bn(net, rng);
  const Matrix x = random_matrix(6, 3, rng);
  const auto r = grad_check(net, squared_error(random_matrix(6, 2, rng), Mode::inference), x, 1e-5);
  EXPECT_TRUE(r.passed) << r.max_relative_error << " " << r.worst_tensor;
}

bool near_kink(const DenseNetwork& net, const Matrix& x, double margin) {
  const auto pass = evaluate(net, x, Mode::training);
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    if (net.layers()[i].spec.activation != Activation::leaky_relu) continue;
    if (pass.cache.layers[i].pre_activation.cwiseAbs().minCoeff() < margin) return true;
  }
  return false;
}

TEST(GradCheck, PropertyRandomSmallNetworks) {
  Rng rng(10);
  const Activation acts[] = {Activation::leaky_relu, Activation::tanh, Activation::identity};
  int checked = 0;
  while (checked < 200) {
    const std::size_t layers = 1 + rng.index(3);
    std::vector<LayerSpec> specs;
    std::size_t in = 1 + rng.index(8);
    const std::size_t input_dim = in;
    for (std::size_t i = 0; i < layers; ++i) {
      const std::size_t out = 1 + rng.index(8);
      specs.push_back({in, out, acts[rng.index(3)], rng.index(2) == 1});
      in = out;
    }
    auto net = init_network(specs, rng.next());
    perturb_bn(net, rng);
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.index(6));
    const Matrix x = random_matrix(n, static_cast<Eigen::Index>(input_dim), rng);
    const Matrix y = random_matrix(n, static_cast<Eigen::Index>(in), rng);
    // Central differences straddling a leaky-relu kink measure a one-sided slope.
    if (near_kink(net, x, 1e-3)) continue;
    const auto r = grad_check(net, squared_error(y), x, 1e-5);
    EXPECT_TRUE(r.passed) << "case " << checked << ": " << r.max_relative_error << " at " << r.worst_tensor;
    ++checked;
  }
}

TEST(GradCheck, CorruptedGradientFails) {
  auto net = init_network({{3, 2, Activation::tanh, false}}, 6);
  Rng rng(11);
  const Matrix x = random_matrix(4, 3, rng);
  const Matrix y = random_matrix(4, 2, rng);
  auto base = squared_error(y);
  DifferentiableLoss corrupted = [&](const DenseNetwork& n, const Matrix& b) {
    auto [v, g] = base(n, b);
    g.tensors[0](0, 0) += 0.5;
    return std::make_pair(v, g);
  };
  EXPECT_FALSE(grad_check(net, corrupted, x, 1e-5).passed);
}

TEST(Optimizer, SingleSgdStep) {
  DenseNetwork net({{1, 1, Activation::identity, false}});
  net.mutable_layers()[0].weight(0, 0) = 1.0;
  auto state = OptimizerState::create({Algorithm::sgd, 0.1}, net);
  auto g = GradientSet::zeros_like(net);
  g.tensors[0](0, 0) = 1.0;
  optimizer_step(state, net, g, 0.0);
  EXPECT_DOUBLE_EQ(net.layers()[0].weight(0, 0), 0.9);
}

TEST(Optimizer, DecayOnlyShrinksWeightsNotBiases) {
  auto net = init_network({{3, 4, Activation::leaky_relu, true}, {4, 2, Activation::identity, false}}, 2);
  Rng rng(1);
  perturb_bn(net, rng);
  const DenseNetwork before = net;
  auto state = OptimizerState::create({Algorithm::sgd, 0.1}, net);
  optimizer_step(state, net, GradientSet::zeros_like(net), 0.5);
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& a = net.layers()[i];
    const auto& b = before.layers()[i];
    EXPECT_LT((a.weight - (1.0 - 0.1 * 0.5) * b.weight).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(a.bias, b.bias);
    if (a.spec.batch_norm) {
      EXPECT_EQ(a.bn_scale, b.bn_scale);
      EXPECT_EQ(a.bn_shift, b.bn_shift);
    }
  }
}

TEST(Optimizer, ZeroGradientNoDecayIsIdentity) {
  auto net = init_network({{3, 4, Activation::leaky_relu, true}}, 2);
  const DenseNetwork before = net;
  for (auto alg : {Algorithm::sgd, Algorithm::adam}) {
    auto state = OptimizerState::create({alg, 0.1}, net);
    for (int i = 0; i < 3; ++i) optimizer_step(state, net, GradientSet::zeros_like(net), 0.0);
    EXPECT_EQ(net, before);
  }
}

TEST(Optimizer, AdamQuadraticBowl) {
  DenseNetwork net({{1, 1, Activation::identity, false}});
  net.mutable_layers()[0].weight(0, 0) = 1.0;
  auto state = OptimizerState::create({Algorithm::adam, 0.05}, net);
  for (int t = 0; t < 200; ++t) {
    auto g = GradientSet::zeros_like(net);
    g.tensors[0](0, 0) = 2.0 * net.layers()[0].weight(0, 0);
    optimizer_step(state, net, g, 0.0);
  }
  const double w = net.layers()[0].weight(0, 0);
  EXPECT_LT(std::abs(w), 0.01);
  // Reference recurrence evaluated independently (Python, same constants).
  EXPECT_NEAR(w, 2.8451333237271486e-05, 1e-9);
  EXPECT_EQ(state.step, 200u);
}

TEST(Optimizer, NonFiniteGradientNamesTensor) {
  auto net = init_network({{2, 2, Activation::identity, false}}, 0);
  auto state = OptimizerState::create({}, net);
  auto g = GradientSet::zeros_like(net);
  g.tensors[1](0, 0) = std::nan("");
  try {
    optimizer_step(state, net, g, 0.0);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0 bias"), std::string::npos);
  }
}

TEST(Checkpoint, BitExactRoundTrip) {
  auto net = init_network({{6, 5, Activation::leaky_relu, true}, {5, 3, Activation::tanh, false}}, 12);
  Rng rng(13);
  perturb_bn(net, rng);
  for (auto& l : net.mutable_layers()) l.weight *= 1.0 / 3.0;  // non-terminating binary fractions
  const auto text = to_json(net).dump();
  const auto back = network_from_json(nlohmann::json::parse(text));
  EXPECT_EQ(back, net);
  const Matrix x = random_matrix(4, 6, rng);
  EXPECT_EQ(infer(back, x), infer(net, x));
  auto bad = nlohmann::json::parse(text);
  bad["layers"][0]["weight"]["rows"] = 4;
  EXPECT_THROW(network_from_json(bad), FormatError);
}

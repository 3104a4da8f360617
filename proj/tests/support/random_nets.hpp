#pragma once

// Randomized small networks shared by the gradient tests and the acceptance
// suite.

#include <vector>

#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace testsupport {

using mcdsvdd::nn::Matrix;
using mcdsvdd::Rng;
using mcdsvdd::nn::Activation;
using mcdsvdd::nn::DenseNetwork;
using mcdsvdd::nn::LayerSpec;
namespace nn = mcdsvdd::nn;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline DenseNetwork identity_encoder(std::size_t dim) {
  DenseNetwork net({{dim, dim, Activation::identity, false}});
  net.mutable_layers()[0].weight = Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  return net;
}

// Random chain of at most 3 layers with dims <= 8, BN state perturbed.
inline DenseNetwork random_network(std::size_t in, std::size_t out, Rng& rng) {
  const std::size_t layers = 1 + rng.index(3);
  std::vector<LayerSpec> specs;
  std::size_t cur = in;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::size_t next = i + 1 == layers ? out : 1 + rng.index(8);
    const Activation acts[] = {Activation::leaky_relu, Activation::tanh, Activation::identity};
    const Activation a = acts[rng.index(3)];
    specs.push_back({cur, next, a, rng.index(2) == 1});
    cur = next;
  }
  auto net = nn::init_network(specs, rng.next());
  for (auto& l : net.mutable_layers()) {
    if (!l.spec.batch_norm) continue;
    for (Eigen::Index i = 0; i < l.bn_scale.size(); ++i) {
      l.bn_scale(i) = 1.0 + 0.3 * rng.normal();
      l.bn_shift(i) = 0.3 * rng.normal();
      l.running_mean(i) = 0.2 * rng.normal();
      l.running_var(i) = 0.5 + rng.uniform();
    }
  }
  return net;
}

// True when a leaky-relu pre-activation sits within `margin` of its kink,
// where a central difference measures a one-sided slope.
inline bool near_kink(const DenseNetwork& net, const Matrix& x, double margin = 1e-3) {
  const auto pass = nn::evaluate(net, x, nn::Mode::training);
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    if (net.layers()[i].spec.activation != Activation::leaky_relu) continue;
    if (pass.cache.layers[i].pre_activation.cwiseAbs().minCoeff() < margin) return true;
  }
  return false;
}

}  // namespace testsupport

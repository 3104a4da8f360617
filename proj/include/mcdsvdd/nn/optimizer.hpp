#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::nn {

enum class Algorithm { sgd, adam };

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::adam;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;

  static OptimizerState create(const OptimizerConfig& config, const DenseNetwork& net) {
    OptimizerState s;
    s.config = config;
    if (config.algorithm == Algorithm::adam) {
      const auto zeros = GradientSet::zeros_like(net);
      s.first_moment = zeros.tensors;
      s.second_moment = zeros.tensors;
    }
    return s;
  }
};

// One update. Weight decay adds lambda * W to weight gradients only (the
// gradient of (lambda/2)|W|^2); biases and bn affine terms are not decayed.
inline void optimizer_step(OptimizerState& state, DenseNetwork& net, const GradientSet& grads,
                           double weight_decay) {
  if (weight_decay < 0.0) throw ConfigError("weight decay must be non-negative");
  auto params = parameters(net);
  if (grads.tensors.size() != params.size()) throw ShapeError("gradient set does not match network");
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& g = grads.tensors[t];
    if (g.rows() != params[t].value.rows() || g.cols() != params[t].value.cols()) {
      throw ShapeError("gradient shape mismatch for " + params[t].name());
    }
    if (!g.allFinite()) throw NumericError("non-finite gradient in " + params[t].name());
  }
  const auto& cfg = state.config;
  ++state.step;
  if (cfg.algorithm == Algorithm::adam && state.first_moment.size() != params.size()) {
    throw ShapeError("optimizer state does not match network");
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = params[t];
    Matrix g = grads.tensors[t];
    if (p.kind == ParamKind::weight && weight_decay > 0.0) g += weight_decay * p.value;
    if (cfg.algorithm == Algorithm::sgd) {
      p.value -= cfg.learning_rate * g;
      continue;
    }
    auto& m = state.first_moment[t];
    auto& v = state.second_moment[t];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.value.array() -= cfg.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.epsilon);
  }
}

}  // namespace mcdsvdd::nn

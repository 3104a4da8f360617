#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"

namespace mcdsvdd::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { leaky_relu, tanh, identity };

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "leaky_relu") return Activation::leaky_relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::identity;
  bool batch_norm = false;

  bool operator==(const LayerSpec&) const = default;
};

// Affine + (optional batch norm) + activation.
struct Layer {
  LayerSpec spec;
  Matrix weight;  // out x in
  Vector bias;    // out
  // Present iff spec.batch_norm.
  Vector bn_scale;
  Vector bn_shift;
  Vector running_mean;
  Vector running_var;
};

enum class Mode { training, inference };

enum class ParamKind { weight, bias, bn_scale, bn_shift };

// Feed-forward chain of dense layers. Every mutation (parameter update or
// running-statistics update) assigns a fresh state stamp, which forward
// caches record so a stale cache is detected in backward().
class DenseNetwork {
 public:
  DenseNetwork() = default;

  // Zero weights; see init_network() for random initialization.
  explicit DenseNetwork(const std::vector<LayerSpec>& specs) {
    if (specs.empty()) throw ShapeError("network needs at least one layer");
    for (std::size_t i = 0; i < specs.size(); ++i) {
      const auto& s = specs[i];
      if (s.in_dim == 0 || s.out_dim == 0) throw ShapeError("layer dims must be positive");
      if (i > 0 && specs[i - 1].out_dim != s.in_dim) {
        throw ShapeError("layer " + std::to_string(i) + " expects " + std::to_string(s.in_dim) +
                         " inputs but layer " + std::to_string(i - 1) + " produces " +
                         std::to_string(specs[i - 1].out_dim));
      }
      Layer l;
      l.spec = s;
      const auto out = static_cast<Eigen::Index>(s.out_dim);
      l.weight = Matrix::Zero(out, static_cast<Eigen::Index>(s.in_dim));
      l.bias = Vector::Zero(out);
      if (s.batch_norm) {
        l.bn_scale = Vector::Ones(out);
        l.bn_shift = Vector::Zero(out);
        l.running_mean = Vector::Zero(out);
        l.running_var = Vector::Ones(out);
      }
      layers_.push_back(std::move(l));
    }
    touch();
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }

  // Mutable access bumps the state stamp.
  std::vector<Layer>& mutable_layers() {
    touch();
    return layers_;
  }

  std::vector<LayerSpec> specs() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers_) out.push_back(l.spec);
    return out;
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().spec.in_dim; }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().spec.out_dim; }
  bool has_batch_norm() const {
    for (const auto& l : layers_) {
      if (l.spec.batch_norm) return true;
    }
    return false;
  }

  // Number of trainable tensors, in the canonical order used by GradientSet
  // and OptimizerState: per layer weight, bias, then bn scale/shift.
  std::size_t tensor_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.spec.batch_norm ? 4 : 2;
    return n;
  }

  std::uint64_t stamp() const noexcept { return stamp_; }
  void touch() { stamp_ = next_stamp(); }

  bool operator==(const DenseNetwork& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& a = layers_[i];
      const auto& b = o.layers_[i];
      if (!(a.spec == b.spec) || a.weight != b.weight || a.bias != b.bias) return false;
      if (a.spec.batch_norm && (a.bn_scale != b.bn_scale || a.bn_shift != b.bn_shift ||
                                a.running_mean != b.running_mean || a.running_var != b.running_var)) {
        return false;
      }
    }
    return true;
  }

 private:
  static std::uint64_t next_stamp() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  std::vector<Layer> layers_;
  std::uint64_t stamp_ = 0;
};

// Layers [begin, end) of `net` as a standalone network, state included.
inline DenseNetwork slice(const DenseNetwork& net, std::size_t begin, std::size_t end) {
  if (begin >= end || end > net.layers().size()) throw ShapeError("invalid layer range");
  const auto all = net.specs();
  DenseNetwork out(std::vector<LayerSpec>(all.begin() + static_cast<std::ptrdiff_t>(begin),
                                          all.begin() + static_cast<std::ptrdiff_t>(end)));
  auto& layers = out.mutable_layers();
  for (std::size_t i = begin; i < end; ++i) layers[i - begin] = net.layers()[i];
  return out;
}

// `first` followed by `second`.
inline DenseNetwork concat(const DenseNetwork& first, const DenseNetwork& second) {
  auto specs = first.specs();
  for (const auto& s : second.specs()) specs.push_back(s);
  DenseNetwork out(specs);
  auto& layers = out.mutable_layers();
  std::size_t i = 0;
  for (const auto& l : first.layers()) layers[i++] = l;
  for (const auto& l : second.layers()) layers[i++] = l;
  return out;
}

// Mutable view of one trainable tensor.
struct ParamRef {
  ParamKind kind;
  std::size_t layer;
  Eigen::Map<Matrix> value;

  std::string name() const {
    static const char* names[] = {"weight", "bias", "bn_scale", "bn_shift"};
    return "layer " + std::to_string(layer) + " " + names[static_cast<int>(kind)];
  }
};

inline std::vector<ParamRef> parameters(DenseNetwork& net) {
  std::vector<ParamRef> out;
  auto& layers = net.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& l = layers[i];
    out.push_back({ParamKind::weight, i, Eigen::Map<Matrix>(l.weight.data(), l.weight.rows(), l.weight.cols())});
    out.push_back({ParamKind::bias, i, Eigen::Map<Matrix>(l.bias.data(), l.bias.size(), 1)});
    if (l.spec.batch_norm) {
      out.push_back({ParamKind::bn_scale, i, Eigen::Map<Matrix>(l.bn_scale.data(), l.bn_scale.size(), 1)});
      out.push_back({ParamKind::bn_shift, i, Eigen::Map<Matrix>(l.bn_shift.data(), l.bn_shift.size(), 1)});
    }
  }
  return out;
}

// Gradients aligned with parameters(net), plus the gradient w.r.t. the input.
struct GradientSet {
  std::vector<Matrix> tensors;
  Matrix input;

  static GradientSet zeros_like(const DenseNetwork& net) {
    GradientSet g;
    for (const auto& l : net.layers()) {
      g.tensors.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
      g.tensors.push_back(Matrix::Zero(l.bias.size(), 1));
      if (l.spec.batch_norm) {
        g.tensors.push_back(Matrix::Zero(l.bn_scale.size(), 1));
        g.tensors.push_back(Matrix::Zero(l.bn_shift.size(), 1));
      }
    }
    return g;
  }
};

// LeCun-uniform fan-in initialization: U(-sqrt(3/fan_in), sqrt(3/fan_in)),
// i.e. standard deviation 1/sqrt(fan_in). Biases zero, bn scale 1, shift 0.
inline double init_bound(std::size_t fan_in) { return std::sqrt(3.0 / static_cast<double>(fan_in)); }

inline DenseNetwork init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  DenseNetwork net(specs);
  Rng rng(seed);
  for (auto& l : net.mutable_layers()) {
    const double bound = init_bound(l.spec.in_dim);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
    }
  }
  return net;
}

struct LayerCache {
  Matrix input;           // n x in
  Matrix normalized;      // bn only: x_hat, n x out
  Vector inv_std;         // bn only
  Matrix pre_activation;  // n x out
  Matrix output;          // n x out
};

struct ForwardCache {
  std::uint64_t stamp = 0;
  Mode mode = Mode::inference;
  std::vector<LayerCache> layers;
};

struct ForwardPass {
  Matrix output;
  ForwardCache cache;
};

namespace detail {

inline Matrix activate(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::leaky_relu: return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::identity: return z;
  }
  return z;
}

inline Matrix activation_backward(Activation a, const LayerCache& c, const Matrix& grad_out) {
  switch (a) {
    case Activation::leaky_relu:
      return grad_out.binaryExpr(c.pre_activation, [](double g, double z) { return z > 0.0 ? g : kLeakySlope * g; });
    case Activation::tanh:
      return (grad_out.array() * (1.0 - c.output.array().square())).matrix();
    case Activation::identity: return grad_out;
  }
  return grad_out;
}

struct BatchStats {
  std::size_t layer;
  Vector mean;
  Vector var;  // biased (1/n)
};

// Shared forward. In training mode the per-layer batch statistics are
// appended to `stats` when it is non-null.
inline ForwardPass forward_impl(const DenseNetwork& net, const Matrix& batch, Mode mode,
                                std::vector<BatchStats>* stats) {
  if (static_cast<std::size_t>(batch.cols()) != net.input_dim()) {
    throw ShapeError("batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                     std::to_string(net.input_dim()));
  }
  const Eigen::Index n = batch.rows();
  if (mode == Mode::training && net.has_batch_norm() && n < 2) {
    throw BatchSizeError("batch norm in training mode needs at least 2 rows, got " + std::to_string(n));
  }
  ForwardPass pass;
  pass.cache.mode = mode;
  pass.cache.layers.resize(net.layers().size());
  Matrix current = batch;
  for (std::size_t li = 0; li < net.layers().size(); ++li) {
    const Layer& l = net.layers()[li];
    LayerCache& c = pass.cache.layers[li];
    c.input = std::move(current);
    Matrix z = c.input * l.weight.transpose();
    z.rowwise() += l.bias.transpose();
    if (l.spec.batch_norm) {
      Vector mean;
      Vector var;
      if (mode == Mode::training) {
        mean = z.colwise().mean().transpose();
        var = (z.rowwise() - mean.transpose()).array().square().colwise().mean().transpose();
        if (stats != nullptr) stats->push_back({li, mean, var});
      } else {
        mean = l.running_mean;
        var = l.running_var;
      }
      c.inv_std = (var.array() + kBatchNormEps).rsqrt().matrix();
      c.normalized = ((z.rowwise() - mean.transpose()).array().rowwise() * c.inv_std.transpose().array()).matrix();
      c.pre_activation = (c.normalized.array().rowwise() * l.bn_scale.transpose().array()).matrix();
      c.pre_activation.rowwise() += l.bn_shift.transpose();
    } else {
      c.pre_activation = std::move(z);
    }
    c.output = activate(l.spec.activation, c.pre_activation);
    current = c.output;
  }
  pass.output = std::move(current);
  pass.cache.stamp = net.stamp();
  return pass;
}

}  // namespace detail

// Forward pass. Training mode uses batch statistics and updates the running
// statistics; inference mode uses the running statistics.
inline ForwardPass forward(DenseNetwork& net, const Matrix& batch, Mode mode) {
  if (mode != Mode::training || !net.has_batch_norm()) return detail::forward_impl(net, batch, mode, nullptr);
  std::vector<detail::BatchStats> stats;
  ForwardPass pass = detail::forward_impl(net, batch, mode, &stats);
  const double n = static_cast<double>(batch.rows());
  auto& layers = net.mutable_layers();
  for (const auto& st : stats) {
    Layer& l = layers[st.layer];
    l.running_mean = (1.0 - kBatchNormMomentum) * l.running_mean + kBatchNormMomentum * st.mean;
    l.running_var = (1.0 - kBatchNormMomentum) * l.running_var + kBatchNormMomentum * (n / (n - 1.0)) * st.var;
  }
  pass.cache.stamp = net.stamp();
  return pass;
}

// Forward pass that never touches running statistics.
inline ForwardPass evaluate(const DenseNetwork& net, const Matrix& batch, Mode mode) {
  return detail::forward_impl(net, batch, mode, nullptr);
}

// Inference-mode output only.
inline Matrix infer(const DenseNetwork& net, const Matrix& batch) {
  return detail::forward_impl(net, batch, Mode::inference, nullptr).output;
}

// Exact reverse-mode gradients of sum(grad_output .* output) w.r.t. every
// trainable tensor and the input batch.
inline GradientSet backward(const DenseNetwork& net, const ForwardCache& cache, const Matrix& grad_output) {
  if (cache.stamp != net.stamp()) throw CacheError("forward cache does not match the network's current state");
  if (cache.layers.size() != net.layers().size()) throw CacheError("forward cache has wrong layer count");
  const auto& last = cache.layers.back();
  if (grad_output.rows() != last.output.rows() || grad_output.cols() != last.output.cols()) {
    throw ShapeError("output gradient shape does not match the forward output");
  }
  GradientSet grads;
  std::vector<std::vector<Matrix>> per_layer(net.layers().size());
  Matrix g = grad_output;
  const double n = static_cast<double>(grad_output.rows());
  for (std::size_t li = net.layers().size(); li-- > 0;) {
    const Layer& l = net.layers()[li];
    const LayerCache& c = cache.layers[li];
    Matrix d_pre = detail::activation_backward(l.spec.activation, c, g);
    Matrix d_z;
    auto& out = per_layer[li];
    if (l.spec.batch_norm) {
      const Matrix d_scale = (d_pre.array() * c.normalized.array()).colwise().sum().transpose().matrix();
      const Matrix d_shift = d_pre.colwise().sum().transpose();
      const Matrix d_norm = (d_pre.array().rowwise() * l.bn_scale.transpose().array()).matrix();
      if (cache.mode == Mode::training) {
        const Eigen::RowVectorXd sum_dn = d_norm.colwise().sum();
        const Eigen::RowVectorXd sum_dn_xhat = (d_norm.array() * c.normalized.array()).colwise().sum().matrix();
        Matrix t = (n * d_norm.array()).matrix();
        t.rowwise() -= sum_dn;
        t -= (c.normalized.array().rowwise() * sum_dn_xhat.array()).matrix();
        d_z = ((t.array().rowwise() * c.inv_std.transpose().array()) / n).matrix();
      } else {
        d_z = (d_norm.array().rowwise() * c.inv_std.transpose().array()).matrix();
      }
      out.push_back(d_z.transpose() * c.input);
      out.push_back(d_z.colwise().sum().transpose());
      out.push_back(d_scale);
      out.push_back(d_shift);
    } else {
      d_z = std::move(d_pre);
      out.push_back(d_z.transpose() * c.input);
      out.push_back(d_z.colwise().sum().transpose());
    }
    g = d_z * l.weight;
  }
  for (auto& layer_grads : per_layer) {
    for (auto& t : layer_grads) grads.tensors.push_back(std::move(t));
  }
  grads.input = std::move(g);
  return grads;
}

// (lambda/2) * sum of squared weights; biases and bn affine terms excluded.
inline double weight_decay_penalty(const DenseNetwork& net, double lambda) {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& l : net.layers()) s += l.weight.squaredNorm();
  return 0.5 * lambda * s;
}

}  // namespace mcdsvdd::nn

#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::nn {

inline constexpr int kCheckpointVersion = 1;

// Doubles are written by nlohmann's shortest round-trip formatter and read
// back with strtod, so the round trip is bit-exact for finite values.
namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> flat(m.data(), m.data() + m.size());  // column-major
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(flat)}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw FormatError("tensor size mismatch");
  return Eigen::Map<const Matrix>(flat.data(), rows, cols);
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto flat = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace detail

inline nlohmann::json to_json(const DenseNetwork& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json lj = {
        {"in_dim", l.spec.in_dim},
        {"out_dim", l.spec.out_dim},
        {"activation", to_string(l.spec.activation)},
        {"batch_norm", l.spec.batch_norm},
        {"weight", detail::matrix_to_json(l.weight)},
        {"bias", detail::to_std(l.bias)},
    };
    if (l.spec.batch_norm) {
      lj["bn_scale"] = detail::to_std(l.bn_scale);
      lj["bn_shift"] = detail::to_std(l.bn_shift);
      lj["running_mean"] = detail::to_std(l.running_mean);
      lj["running_var"] = detail::to_std(l.running_var);
    }
    layers.push_back(std::move(lj));
  }
  return {{"format", "mcdsvdd.network"}, {"version", kCheckpointVersion}, {"layers", std::move(layers)}};
}

inline DenseNetwork network_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "mcdsvdd.network") throw FormatError("not a network checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
    std::vector<LayerSpec> specs;
    for (const auto& lj : j.at("layers")) {
      specs.push_back({lj.at("in_dim").get<std::size_t>(), lj.at("out_dim").get<std::size_t>(),
                       activation_from_string(lj.at("activation").get<std::string>()),
                       lj.at("batch_norm").get<bool>()});
    }
    DenseNetwork net(specs);
    auto& layers = net.mutable_layers();
    std::size_t i = 0;
    for (const auto& lj : j.at("layers")) {
      auto& l = layers[i++];
      Matrix w = detail::matrix_from_json(lj.at("weight"));
      Vector b = detail::vector_from_json(lj.at("bias"));
      if (w.rows() != l.weight.rows() || w.cols() != l.weight.cols() || b.size() != l.bias.size()) {
        throw FormatError("parameter shape does not match layer spec");
      }
      l.weight = std::move(w);
      l.bias = std::move(b);
      if (l.spec.batch_norm) {
        l.bn_scale = detail::vector_from_json(lj.at("bn_scale"));
        l.bn_shift = detail::vector_from_json(lj.at("bn_shift"));
        l.running_mean = detail::vector_from_json(lj.at("running_mean"));
        l.running_var = detail::vector_from_json(lj.at("running_var"));
        const auto n = static_cast<Eigen::Index>(l.spec.out_dim);
        if (l.bn_scale.size() != n || l.bn_shift.size() != n || l.running_mean.size() != n ||
            l.running_var.size() != n) {
          throw FormatError("batch-norm state shape does not match layer spec");
        }
        if ((l.running_var.array() < 0.0).any()) throw FormatError("negative running variance");
      }
    }
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed network checkpoint: ") + e.what());
  }
}

}  // namespace mcdsvdd::nn

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/detectors/training.hpp"
#include "mcdsvdd/nn/checkpoint.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::detectors {

// Encoder and decoder stored as one chain; the first `encoder_layers`
// layers form the encoder.
struct AutoencoderModel {
  nn::DenseNetwork network;
  std::size_t encoder_layers = 0;

  nn::DenseNetwork encoder() const { return nn::slice(network, 0, encoder_layers); }
  nn::DenseNetwork decoder() const { return nn::slice(network, encoder_layers, network.layers().size()); }
  std::size_t input_dim() const { return network.input_dim(); }
};

inline AutoencoderModel init_autoencoder(std::size_t input_dim, const ArchitectureConfig& arch, std::uint64_t seed) {
  auto specs = encoder_specs(input_dim, arch);
  const std::size_t k = specs.size();
  for (const auto& s : decoder_specs(arch, input_dim)) specs.push_back(s);
  return {nn::init_network(specs, seed), k};
}

// Mean squared error over all entries, and its gradient w.r.t. `output`.
inline std::pair<double, Matrix> reconstruction_loss(const Matrix& output, const Matrix& target) {
  const Matrix diff = output - target;
  const double scale = 1.0 / static_cast<double>(diff.size());
  return {diff.squaredNorm() * scale, 2.0 * scale * diff};
}

// Training-mode reconstruction objective on a batch (running statistics are
// left untouched).
inline std::pair<double, nn::GradientSet> autoencoder_loss(const nn::DenseNetwork& net, const Matrix& batch) {
  auto pass = nn::evaluate(net, batch, nn::Mode::training);
  auto [value, grad] = reconstruction_loss(pass.output, batch);
  return {value, nn::backward(net, pass.cache, grad)};
}

inline double score_autoencoder_row(const AutoencoderModel& model, const Eigen::RowVectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(model.input_dim()));
  }
  const Matrix out = nn::infer(model.network, x);
  return (out - x).squaredNorm() / static_cast<double>(x.size());
}

// One score per row: mean over coordinates of the squared residual.
inline std::vector<double> score_autoencoder(const AutoencoderModel& model, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = score_autoencoder_row(model, x.row(i));
  return out;
}

struct AutoencoderFit {
  AutoencoderModel model;
  TrainingHistory history;
};

// `x` and `validation` hold normalized rows; `strata` labels rows of `x`
// for batch stratification.
inline AutoencoderFit train_autoencoder(const Matrix& x, const std::vector<std::size_t>& strata, const Matrix& validation,
                                        const ArchitectureConfig& arch, const TrainingConfig& training,
                                        std::uint64_t seed) {
  if (x.rows() < 2) throw ShapeError("autoencoder training needs at least 2 rows");
  AutoencoderFit fit{init_autoencoder(static_cast<std::size_t>(x.cols()), arch, derive_seed(seed, {"init"})), {}};
  auto& net = fit.model.network;
  Objective obj;
  obj.nets = {&net};
  obj.step = [&](const std::vector<std::size_t>& rows, Rng&) {
    const Matrix batch = gather_rows(x, rows);
    auto pass = nn::forward(net, batch, nn::Mode::training);
    auto [value, grad] = reconstruction_loss(pass.output, batch);
    return std::make_pair(value, std::vector<nn::GradientSet>{nn::backward(net, pass.cache, grad)});
  };
  obj.validation = [&] { return reconstruction_loss(infer_chunked(net, validation), validation).first; };
  fit.history = run_training(obj, strata, training, derive_seed(seed, {"batches"}));
  return fit;
}

inline nlohmann::json to_json(const AutoencoderModel& m) {
  return {{"network", nn::to_json(m.network)}, {"encoder_layers", m.encoder_layers}};
}

inline AutoencoderModel autoencoder_from_json(const nlohmann::json& j) {
  AutoencoderModel m{nn::network_from_json(j.at("network")), j.at("encoder_layers").get<std::size_t>()};
  if (m.encoder_layers == 0 || m.encoder_layers >= m.network.layers().size()) {
    throw FormatError("autoencoder encoder_layers out of range");
  }
  return m;
}

}  // namespace mcdsvdd::detectors

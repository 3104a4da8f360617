#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "mcdsvdd/core/digest.hpp"
#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/detectors/autoencoder.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/detectors/training.hpp"
#include "mcdsvdd/nn/checkpoint.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::detectors {

// Encoder, a linear head emitting [mu | log sigma^2] side by side, and the
// decoder fed with z = mu + sigma * eps.
struct VaeModel {
  nn::DenseNetwork encoder;
  nn::DenseNetwork heads;
  nn::DenseNetwork decoder;
  std::size_t score_samples = 10;
  std::uint64_t score_seed = 0;

  std::size_t latent() const { return decoder.input_dim(); }
  std::size_t input_dim() const { return encoder.input_dim(); }
};

inline VaeModel init_vae(std::size_t input_dim, const ArchitectureConfig& arch, std::uint64_t seed) {
  VaeModel m;
  m.encoder = nn::init_network(encoder_specs(input_dim, arch), derive_seed(seed, {"encoder"}));
  m.heads = nn::init_network({{arch.latent, 2 * arch.latent, nn::Activation::identity, false}},
                             derive_seed(seed, {"heads"}));
  m.decoder = nn::init_network(decoder_specs(arch, input_dim), derive_seed(seed, {"decoder"}));
  return m;
}

// Closed-form KL(N(mu, sigma^2) || N(0, I)) summed over latent dims and
// averaged over rows.
inline double gaussian_kl(const Matrix& mu, const Matrix& logvar) {
  const double total = -0.5 * (1.0 + logvar.array() - mu.array().square() - logvar.array().exp()).sum();
  return total / static_cast<double>(mu.rows());
}

struct VaeLoss {
  double value = 0.0;
  double reconstruction = 0.0;
  double kl = 0.0;
  std::array<nn::GradientSet, 3> grads;  // encoder, heads, decoder
};

// Reconstruction MSE + kl_weight * KL for fixed noise `eps` (n x latent).
// With `update_running` the encoder's running statistics advance as in a
// training step; the loss value does not depend on them.
inline VaeLoss vae_loss(VaeModel& m, const Matrix& batch, const Matrix& eps, double kl_weight, bool update_running) {
  const Eigen::Index latent = static_cast<Eigen::Index>(m.latent());
  if (eps.rows() != batch.rows() || eps.cols() != latent) throw ShapeError("noise shape mismatch");
  const auto run = [&](nn::DenseNetwork& net, const Matrix& in) {
    return update_running ? nn::forward(net, in, nn::Mode::training) : nn::evaluate(net, in, nn::Mode::training);
  };
  const auto enc = run(m.encoder, batch);
  const auto head = run(m.heads, enc.output);
  const Matrix mu = head.output.leftCols(latent);
  const Matrix logvar = head.output.rightCols(latent);
  const Matrix sigma = (0.5 * logvar.array()).exp().matrix();
  const Matrix z = mu + sigma.cwiseProduct(eps);
  const auto dec = run(m.decoder, z);
  auto [recon, g_out] = reconstruction_loss(dec.output, batch);
  VaeLoss out;
  out.reconstruction = recon;
  out.kl = gaussian_kl(mu, logvar);
  out.value = recon + kl_weight * out.kl;

  const double n = static_cast<double>(batch.rows());
  out.grads[2] = nn::backward(m.decoder, dec.cache, g_out);
  const Matrix& dz = out.grads[2].input;
  Matrix d_head(batch.rows(), 2 * latent);
  d_head.leftCols(latent) = dz + (kl_weight / n) * mu;
  d_head.rightCols(latent) = (dz.array() * eps.array() * 0.5 * sigma.array() +
                              (kl_weight / n) * 0.5 * (logvar.array().exp() - 1.0))
                                 .matrix();
  out.grads[1] = nn::backward(m.heads, head.cache, d_head);
  out.grads[0] = nn::backward(m.encoder, enc.cache, out.grads[1].input);
  return out;
}

inline Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

// Seed for one row's draws, derived from the model seed and the row's bytes.
inline std::uint64_t row_seed(std::uint64_t seed, const Eigen::RowVectorXd& x) {
  const std::string_view bytes(reinterpret_cast<const char*>(x.data()), static_cast<std::size_t>(x.size()) * sizeof(double));
  return derive_seed(seed, fnv1a64(bytes));
}

// Mean reconstruction MSE over `samples` latent draws.
inline double score_vae_row(const VaeModel& m, const Eigen::RowVectorXd& x, std::size_t samples, std::uint64_t seed) {
  if (static_cast<std::size_t>(x.size()) != m.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                     std::to_string(m.input_dim()));
  }
  if (samples == 0) throw ConfigError("score sample count must be at least 1");
  const Eigen::Index latent = static_cast<Eigen::Index>(m.latent());
  const Matrix head = nn::infer(m.heads, nn::infer(m.encoder, x));
  const Eigen::RowVectorXd mu = head.leftCols(latent);
  const Eigen::RowVectorXd sigma = (0.5 * head.rightCols(latent).array()).exp().matrix();
  Rng rng(row_seed(seed, x));
  double total = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const Matrix eps = standard_normal(1, latent, rng);
    const Eigen::RowVectorXd z = mu + sigma.cwiseProduct(eps.row(0));
    total += (nn::infer(m.decoder, z) - x).squaredNorm() / static_cast<double>(x.size());
  }
  return total / static_cast<double>(samples);
}

inline std::vector<double> score_vae(const VaeModel& m, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = score_vae_row(m, x.row(i), m.score_samples, m.score_seed);
  }
  return out;
}

struct VaeFit {
  VaeModel model;
  TrainingHistory history;
};

inline VaeFit train_vae(const Matrix& x, const std::vector<std::size_t>& strata, const Matrix& validation,
                        const ArchitectureConfig& arch, const TrainingConfig& training, const VaeConfig& vae,
                        std::uint64_t seed) {
  if (x.rows() < 2) throw ShapeError("vae training needs at least 2 rows");
  VaeFit fit{init_vae(static_cast<std::size_t>(x.cols()), arch, derive_seed(seed, {"init"})), {}};
  auto& m = fit.model;
  m.score_samples = vae.score_samples;
  m.score_seed = derive_seed(seed, {"score"});
  const Eigen::Index latent = static_cast<Eigen::Index>(arch.latent);
  Objective obj;
  obj.nets = {&m.encoder, &m.heads, &m.decoder};
  obj.step = [&](const std::vector<std::size_t>& rows, Rng& rng) {
    const Matrix batch = gather_rows(x, rows);
    const Matrix eps = standard_normal(batch.rows(), latent, rng);
    auto loss = vae_loss(m, batch, eps, vae.kl_weight, true);
    return std::make_pair(loss.value, std::vector<nn::GradientSet>(loss.grads.begin(), loss.grads.end()));
  };
  const std::uint64_t validation_seed = derive_seed(seed, {"validation"});
  obj.validation = [&] {
    Rng rng(validation_seed);
    const Matrix eps = standard_normal(validation.rows(), latent, rng);
    const Matrix head = infer_chunked(m.heads, infer_chunked(m.encoder, validation));
    const Matrix mu = head.leftCols(latent);
    const Matrix logvar = head.rightCols(latent);
    const Matrix z = mu + (0.5 * logvar.array()).exp().matrix().cwiseProduct(eps);
    return reconstruction_loss(infer_chunked(m.decoder, z), validation).first + vae.kl_weight * gaussian_kl(mu, logvar);
  };
  fit.history = run_training(obj, strata, training, derive_seed(seed, {"batches"}));
  return fit;
}

inline nlohmann::json to_json(const VaeModel& m) {
  return {{"encoder", nn::to_json(m.encoder)},
          {"heads", nn::to_json(m.heads)},
          {"decoder", nn::to_json(m.decoder)},
          {"score_samples", m.score_samples},
          {"score_seed", m.score_seed}};
}

inline VaeModel vae_from_json(const nlohmann::json& j) {
  VaeModel m;
  m.encoder = nn::network_from_json(j.at("encoder"));
  m.heads = nn::network_from_json(j.at("heads"));
  m.decoder = nn::network_from_json(j.at("decoder"));
  m.score_samples = j.at("score_samples").get<std::size_t>();
  m.score_seed = j.at("score_seed").get<std::uint64_t>();
  if (m.heads.input_dim() != m.encoder.output_dim() || m.heads.output_dim() != 2 * m.decoder.input_dim() ||
      m.decoder.output_dim() != m.encoder.input_dim()) {
    throw FormatError("vae component shapes do not chain");
  }
  return m;
}

}  // namespace mcdsvdd::detectors

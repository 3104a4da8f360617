#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/detectors/autoencoder.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/detectors/training.hpp"
#include "mcdsvdd/nn/checkpoint.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::detectors {

// Encoder plus frozen centers (one row per inlier class). The radius is set
// only by the soft-boundary objective.
struct HypersphereModel {
  nn::DenseNetwork encoder;
  Matrix centers;
  std::vector<std::string> classes;
  std::optional<double> radius_sq;
  double nu = 0.0;

  std::size_t input_dim() const { return encoder.input_dim(); }
};

// Squared distance from `embedding` to the nearest center row.
inline double nearest_center_distance(const Eigen::RowVectorXd& embedding, const Matrix& centers) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < centers.rows(); ++j) best = std::min(best, (embedding - centers.row(j)).squaredNorm());
  return best;
}

inline std::vector<double> score_hypersphere(const HypersphereModel& m, const Matrix& x) {
  if (static_cast<std::size_t>(x.cols()) != m.input_dim()) {
    throw ShapeError("input has " + std::to_string(x.cols()) + " features, model expects " +
                     std::to_string(m.input_dim()));
  }
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = nearest_center_distance(nn::infer(m.encoder, x.row(i)), m.centers);
  }
  return out;
}

// Coordinates with |c| < floor move to +-floor, keeping their sign (0 -> +).
inline Matrix snap_centers(Matrix centers, double floor) {
  for (Eigen::Index i = 0; i < centers.size(); ++i) {
    double& v = centers.data()[i];
    if (std::abs(v) < floor) v = v < 0.0 ? -floor : floor;
  }
  return centers;
}

// Per-class mean of inference-mode encoder outputs. `assignment[i]` indexes
// `classes`; rows outside the range are ignored.
inline Matrix init_centers(const nn::DenseNetwork& encoder, const Matrix& x, const std::vector<std::size_t>& assignment,
                           const std::vector<std::string>& classes, double floor) {
  if (assignment.size() != static_cast<std::size_t>(x.rows())) throw ShapeError("assignment length mismatch");
  const Matrix emb = infer_chunked(encoder, x);
  Matrix centers = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), emb.cols());
  std::vector<std::size_t> counts(classes.size(), 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= classes.size()) continue;
    centers.row(static_cast<Eigen::Index>(assignment[i])) += emb.row(static_cast<Eigen::Index>(i));
    ++counts[assignment[i]];
  }
  for (std::size_t j = 0; j < classes.size(); ++j) {
    if (counts[j] == 0) throw CenterError("class '" + classes[j] + "' has no rows to estimate its center");
    centers.row(static_cast<Eigen::Index>(j)) /= static_cast<double>(counts[j]);
  }
  return snap_centers(std::move(centers), floor);
}

inline std::vector<double> one_class_weights(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

// 1 / (rows of the same class in this batch); classes absent from the batch
// simply contribute nothing.
inline std::vector<double> class_balanced_weights(const std::vector<std::size_t>& assignment, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (auto a : assignment) {
    if (a < classes) ++counts[a];
  }
  std::vector<double> w(assignment.size(), 0.0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] < classes) w[i] = 1.0 / static_cast<double>(counts[assignment[i]]);
  }
  return w;
}

// sum_i w_i |phi_i - c_{a_i}|^2 and its gradient w.r.t. the embeddings.
inline std::pair<double, Matrix> center_loss(const Matrix& emb, const Matrix& centers,
                                             const std::vector<std::size_t>& assignment,
                                             const std::vector<double>& weights) {
  Matrix grad = Matrix::Zero(emb.rows(), emb.cols());
  double value = 0.0;
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (weights[k] == 0.0) continue;
    const Eigen::RowVectorXd diff = emb.row(i) - centers.row(static_cast<Eigen::Index>(assignment[k]));
    value += weights[k] * diff.squaredNorm();
    grad.row(i) = 2.0 * weights[k] * diff;
  }
  return {value, grad};
}

// R^2 + (1 / (nu n)) sum_i max(0, |phi_i - c|^2 - R^2), gradient w.r.t. phi.
inline std::pair<double, Matrix> soft_boundary_loss(const Matrix& emb, const Eigen::RowVectorXd& center, double radius_sq,
                                                    double nu) {
  const double scale = 1.0 / (nu * static_cast<double>(emb.rows()));
  Matrix grad = Matrix::Zero(emb.rows(), emb.cols());
  double hinge = 0.0;
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    const Eigen::RowVectorXd diff = emb.row(i) - center;
    const double excess = diff.squaredNorm() - radius_sq;
    if (excess > 0.0) {
      hinge += excess;
      grad.row(i) = 2.0 * scale * diff;
    }
  }
  return {radius_sq + scale * hinge, grad};
}

// Radius line search: the (1 - nu) quantile (linear interpolation) of the
// squared distances. At nu = 1 every radius below the smallest distance is
// optimal and 0 is returned.
inline double radius_from_quantile(std::vector<double> sq_distances, double nu) {
  if (sq_distances.empty()) throw ShapeError("radius update needs at least one distance");
  if (nu >= 1.0) return 0.0;
  std::sort(sq_distances.begin(), sq_distances.end());
  const double pos = (1.0 - nu) * static_cast<double>(sq_distances.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sq_distances.size() - 1);
  return sq_distances[lo] + (pos - static_cast<double>(lo)) * (sq_distances[hi] - sq_distances[lo]);
}

// Trace of the (population) covariance of the rows of `emb`.
inline double embedding_spread(const Matrix& emb) {
  if (emb.rows() == 0) return 0.0;
  const Eigen::RowVectorXd mean = emb.colwise().mean();
  return (emb.rowwise() - mean).squaredNorm() / static_cast<double>(emb.rows());
}

struct HypersphereFit {
  HypersphereModel model;
  TrainingHistory history;
  std::optional<TrainingHistory> pretraining;
  std::vector<double> collapse_trace;  // embedding covariance trace per epoch
  std::vector<std::string> warnings;
};

// Labeled rows for one hypersphere fit. `assignment` indexes `classes` and
// also stratifies the minibatches; a single-sphere fit maps every row to
// center 0 regardless.
struct HypersphereData {
  Matrix x;
  std::vector<std::size_t> assignment;
  Matrix validation;
  std::vector<std::size_t> validation_assignment;
  std::vector<std::string> classes;
};

// Trains `encoder` against frozen `centers`. With `multiclass` the batch
// weights are 1/N_j per class; otherwise 1/n over the batch.
inline HypersphereFit train_hypersphere(nn::DenseNetwork encoder, Matrix centers, const HypersphereData& data,
                                        const HypersphereConfig& hs, const TrainingConfig& training, bool multiclass,
                                        std::uint64_t seed) {
  const bool soft = hs.objective == HypersphereObjective::soft_boundary;
  if (soft && (multiclass || centers.rows() != 1)) throw ConfigError("soft-boundary objective needs a single center");
  HypersphereFit fit;
  fit.model.classes = data.classes;
  fit.model.centers = centers;
  if (soft) fit.model.nu = hs.nu;
  const std::size_t m = data.classes.size();
  const auto weights_for = [&](const std::vector<std::size_t>& a) {
    return multiclass ? class_balanced_weights(a, m) : one_class_weights(a.size());
  };
  const auto squared_distances = [&](const Matrix& x) {
    const Matrix emb = infer_chunked(encoder, x);
    std::vector<double> d(static_cast<std::size_t>(emb.rows()));
    for (Eigen::Index i = 0; i < emb.rows(); ++i) d[static_cast<std::size_t>(i)] = (emb.row(i) - centers.row(0)).squaredNorm();
    return d;
  };
  double radius_sq = soft ? radius_from_quantile(squared_distances(data.x), hs.nu) : 0.0;

  Objective obj;
  obj.nets = {&encoder};
  obj.step = [&](const std::vector<std::size_t>& rows, Rng&) {
    const Matrix batch = gather_rows(data.x, rows);
    auto pass = nn::forward(encoder, batch, nn::Mode::training);
    std::pair<double, Matrix> loss;
    if (soft) {
      loss = soft_boundary_loss(pass.output, centers.row(0), radius_sq, hs.nu);
    } else {
      std::vector<std::size_t> a(rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) a[i] = multiclass ? data.assignment[rows[i]] : 0;
      loss = center_loss(pass.output, centers, a, weights_for(a));
    }
    return std::make_pair(loss.first, std::vector<nn::GradientSet>{nn::backward(encoder, pass.cache, loss.second)});
  };
  obj.validation = [&] {
    const Matrix emb = infer_chunked(encoder, data.validation);
    if (soft) return soft_boundary_loss(emb, centers.row(0), radius_sq, hs.nu).first;
    return center_loss(emb, centers, data.validation_assignment, weights_for(data.validation_assignment)).first;
  };
  obj.on_epoch_end = [&](std::size_t epoch) {
    fit.collapse_trace.push_back(embedding_spread(infer_chunked(encoder, data.x)));
    if (soft && epoch % hs.radius_update_every == 0) radius_sq = radius_from_quantile(squared_distances(data.x), hs.nu);
  };
  std::vector<std::size_t> strata = data.assignment;
  fit.history = run_training(obj, strata, training, derive_seed(seed, {"batches"}));
  if (soft) fit.model.radius_sq = radius_from_quantile(squared_distances(data.x), hs.nu);
  fit.model.encoder = std::move(encoder);

  const double final_spread = embedding_spread(infer_chunked(fit.model.encoder, data.x));
  if (final_spread < 1e-9) {
    Rng rng(derive_seed(seed, {"noise-probe"}));
    Matrix probes(static_cast<Eigen::Index>(std::max<std::size_t>(hs.noise_probes, 1)), data.x.cols());
    for (Eigen::Index i = 0; i < probes.size(); ++i) probes.data()[i] = rng.uniform(-1.0, 1.0);
    auto scores = score_hypersphere(fit.model, probes);
    const auto val_scores = score_hypersphere(fit.model, data.validation);
    scores.insert(scores.end(), val_scores.begin(), val_scores.end());
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (*hi - *lo <= 1e-9 * std::max(1.0, std::abs(*hi))) {
      fit.warnings.push_back("hypersphere collapse: embedding covariance trace " + std::to_string(final_spread) +
                             " and validation rows score the same as uniform noise probes");
    }
  }
  return fit;
}

// Pretrains an autoencoder (unless disabled) and returns its encoder.
inline std::pair<nn::DenseNetwork, std::optional<TrainingHistory>> pretrained_encoder(
    const HypersphereData& data, const ArchitectureConfig& arch, const TrainingConfig& training,
    const HypersphereConfig& hs, std::uint64_t seed) {
  if (!hs.pretrain) {
    return {nn::init_network(encoder_specs(static_cast<std::size_t>(data.x.cols()), arch), derive_seed(seed, {"init"})),
            std::nullopt};
  }
  auto ae = train_autoencoder(data.x, data.assignment, data.validation, arch, training, derive_seed(seed, {"pretrain"}));
  return {ae.model.encoder(), std::move(ae.history)};
}

// Single sphere around the mean embedding. Only the sphere training sees
// `data.assignment` (for batch stratification); the center is global.
inline HypersphereFit train_deep_svdd(const HypersphereData& data, const ArchitectureConfig& arch,
                                      const TrainingConfig& training, const HypersphereConfig& hs, std::uint64_t seed) {
  auto [encoder, pre] = pretrained_encoder(data, arch, training, hs, seed);
  HypersphereData single = data;
  single.classes = {"all"};
  std::vector<std::size_t> zeros(data.assignment.size(), 0);
  const Matrix centers = init_centers(encoder, data.x, zeros, single.classes, hs.center_floor);
  std::fill(single.validation_assignment.begin(), single.validation_assignment.end(), 0);
  auto fit = train_hypersphere(std::move(encoder), centers, single, hs, training, false, seed);
  fit.pretraining = std::move(pre);
  return fit;
}

// One sphere per class, centered on that class's mean embedding.
inline HypersphereFit train_mcdsvdd(const HypersphereData& data, const ArchitectureConfig& arch,
                                    const TrainingConfig& training, const HypersphereConfig& hs, std::uint64_t seed) {
  if (hs.objective != HypersphereObjective::one_class) {
    throw ConfigError("mcdsvdd supports only the one_class objective");
  }
  auto [encoder, pre] = pretrained_encoder(data, arch, training, hs, seed);
  const Matrix centers = init_centers(encoder, data.x, data.assignment, data.classes, hs.center_floor);
  auto fit = train_hypersphere(std::move(encoder), centers, data, hs, training, true, seed);
  fit.pretraining = std::move(pre);
  return fit;
}

inline nlohmann::json to_json(const HypersphereModel& m) {
  nlohmann::json centers = nlohmann::json::array();
  for (Eigen::Index j = 0; j < m.centers.rows(); ++j) {
    std::vector<double> row(static_cast<std::size_t>(m.centers.cols()));
    for (Eigen::Index c = 0; c < m.centers.cols(); ++c) row[static_cast<std::size_t>(c)] = m.centers(j, c);
    centers.push_back(row);
  }
  nlohmann::json j = {{"encoder", nn::to_json(m.encoder)}, {"centers", centers}, {"classes", m.classes}};
  if (m.radius_sq) {
    j["radius_sq"] = *m.radius_sq;
    j["nu"] = m.nu;
  }
  return j;
}

inline HypersphereModel hypersphere_from_json(const nlohmann::json& j) {
  HypersphereModel m;
  m.encoder = nn::network_from_json(j.at("encoder"));
  m.classes = j.at("classes").get<std::vector<std::string>>();
  const auto rows = j.at("centers").get<std::vector<std::vector<double>>>();
  if (rows.empty() || rows.size() != m.classes.size()) throw FormatError("center rows do not match classes");
  m.centers.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.encoder.output_dim()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.encoder.output_dim()) throw FormatError("center width does not match encoder output");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m.centers(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  if (j.contains("radius_sq")) {
    m.radius_sq = j.at("radius_sq").get<double>();
    m.nu = j.at("nu").get<double>();
  }
  return m;
}

}  // namespace mcdsvdd::detectors

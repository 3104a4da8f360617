#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/data/dataset.hpp"
#include "mcdsvdd/data/split.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/nn/network.hpp"
#include "mcdsvdd/nn/optimizer.hpp"

namespace mcdsvdd::detectors {

inline std::vector<nn::LayerSpec> encoder_specs(std::size_t input_dim, const ArchitectureConfig& arch) {
  std::vector<nn::LayerSpec> specs;
  std::size_t in = input_dim;
  for (auto h : arch.hidden) {
    specs.push_back({in, h, nn::Activation::leaky_relu, arch.batch_norm});
    in = h;
  }
  specs.push_back({in, arch.latent, arch.latent_activation, arch.latent_batch_norm});
  return specs;
}

inline std::vector<nn::LayerSpec> decoder_specs(const ArchitectureConfig& arch, std::size_t output_dim) {
  std::vector<nn::LayerSpec> specs;
  std::size_t in = arch.latent;
  for (auto it = arch.hidden.rbegin(); it != arch.hidden.rend(); ++it) {
    specs.push_back({in, *it, nn::Activation::leaky_relu, arch.batch_norm});
    in = *it;
  }
  specs.push_back({in, output_dim, nn::Activation::tanh, false});
  return specs;
}

// Partitions rows 0..n-1 into ceil(n / batch_size) minibatches (fewer if that
// would leave a batch with a single row). Rows are shuffled within each label
// and dealt round-robin label by label, so every batch holds each label in
// proportion to its count (within one row) and batch sizes differ by at most
// one. Batch order is shuffled as well.
inline std::vector<std::vector<std::size_t>> stratified_batches(const std::vector<std::size_t>& labels,
                                                                std::size_t batch_size, Rng& rng) {
  const std::size_t n = labels.size();
  if (n == 0) return {};
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::size_t count = (n + batch_size - 1) / batch_size;
  count = std::max<std::size_t>(1, std::min(count, n / 2));
  std::map<std::size_t, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < n; ++i) by_label[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> batches(count);
  std::size_t slot = static_cast<std::size_t>(rng.index(count));
  for (auto& [label, rows] : by_label) {
    rng.shuffle(std::span<std::size_t>(rows));
    for (auto r : rows) {
      batches[slot].push_back(r);
      slot = (slot + 1) % count;
    }
  }
  rng.shuffle(std::span<std::vector<std::size_t>>(batches));
  return batches;
}

inline Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

// Inference-mode outputs computed in fixed chunks; used for monitoring,
// center estimation and validation, where only run-to-run determinism matters.
inline Matrix infer_chunked(const nn::DenseNetwork& net, const Matrix& x, Eigen::Index chunk = 1024) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(net.output_dim()));
  for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, x.rows() - start);
    out.middleRows(start, len) = nn::infer(net, x.middleRows(start, len));
  }
  return out;
}

struct TrainingHistory {
  std::vector<double> batch_loss;  // objective incl. weight decay at every step
  std::vector<double> train_loss;  // per-epoch mean of batch_loss
  std::vector<double> validation_loss;
  std::size_t best_epoch = 0;  // 0 = the initial parameters were kept
  double best_validation_loss = std::numeric_limits<double>::infinity();
  std::size_t epochs_run = 0;

  nlohmann::json to_json() const {
    return {{"train_loss", train_loss},
            {"validation_loss", validation_loss},
            {"best_epoch", best_epoch},
            {"best_validation_loss", best_validation_loss},
            {"epochs_run", epochs_run}};
  }
};

// The pieces of a model that the shared minibatch loop drives.
struct Objective {
  std::vector<nn::DenseNetwork*> nets;
  // Data loss and per-network gradients on the given rows, in training mode.
  std::function<std::pair<double, std::vector<nn::GradientSet>>(const std::vector<std::size_t>&, Rng&)> step;
  // Held-out loss in inference mode; lower is better.
  std::function<double()> validation;
  std::function<void(std::size_t epoch)> on_epoch_end;
};

// Minibatch training with early stopping on the validation loss. The
// parameters of the best validation epoch are restored on exit.
inline TrainingHistory run_training(Objective& objective, const std::vector<std::size_t>& strata,
                                    const TrainingConfig& config, std::uint64_t seed) {
  TrainingHistory history;
  std::vector<nn::OptimizerState> states;
  for (auto* net : objective.nets) states.push_back(nn::OptimizerState::create(config.optimizer, *net));
  std::vector<nn::DenseNetwork> best;
  for (auto* net : objective.nets) best.push_back(*net);
  Rng rng(seed);
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double sum = 0.0;
    const auto batches = stratified_batches(strata, config.batch_size, rng);
    for (const auto& rows : batches) {
      auto [loss, grads] = objective.step(rows, rng);
      for (auto* net : objective.nets) loss += nn::weight_decay_penalty(*net, config.weight_decay);
      if (!std::isfinite(loss)) throw TrainingError(epoch - 1, "training loss became non-finite");
      try {
        for (std::size_t k = 0; k < objective.nets.size(); ++k) {
          nn::optimizer_step(states[k], *objective.nets[k], grads[k], config.weight_decay);
        }
      } catch (const NumericError& e) {
        throw TrainingError(epoch - 1, e.what());
      }
      history.batch_loss.push_back(loss);
      sum += loss;
    }
    history.train_loss.push_back(batches.empty() ? 0.0 : sum / static_cast<double>(batches.size()));
    history.epochs_run = epoch;
    if (objective.on_epoch_end) objective.on_epoch_end(epoch);
    const double val = objective.validation();
    if (!std::isfinite(val)) throw TrainingError(epoch - 1, "validation loss became non-finite");
    history.validation_loss.push_back(val);
    if (val < history.best_validation_loss) {
      history.best_validation_loss = val;
      history.best_epoch = epoch;
      for (std::size_t k = 0; k < objective.nets.size(); ++k) best[k] = *objective.nets[k];
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  for (std::size_t k = 0; k < objective.nets.size(); ++k) {
    *objective.nets[k] = best[k];
    objective.nets[k]->touch();
  }
  return history;
}

// Splits a validation share off `train`, stratified by subclass. Falls back
// to validating on the training rows when some subclass has a single row.
inline std::pair<data::Dataset, data::Dataset> split_validation(const data::Dataset& train, double fraction,
                                                                std::uint64_t seed,
                                                                std::vector<std::string>& warnings) {
  try {
    auto split = data::stratified_split(train, fraction, seed);
    return {std::move(split.train), std::move(split.test)};
  } catch (const StratificationError& e) {
    warnings.push_back(std::string("validation split unavailable, validating on training rows: ") + e.what());
    return {train, train};
  }
}

// Class index per row, with classes numbered by sorted subclass name.
inline std::vector<std::size_t> class_indices(const data::Dataset& d, const std::vector<std::string>& classes) {
  std::vector<std::size_t> out;
  out.reserve(d.size());
  for (const auto& s : d.samples()) {
    const auto it = std::lower_bound(classes.begin(), classes.end(), s.subclass);
    out.push_back(it != classes.end() && *it == s.subclass ? static_cast<std::size_t>(it - classes.begin())
                                                           : classes.size());
  }
  return out;
}

inline std::vector<std::string> sorted_subclasses(const data::Dataset& d) {
  std::vector<std::string> out;
  for (const auto& [name, count] : d.subclass_counts()) out.push_back(name);
  return out;
}

}  // namespace mcdsvdd::detectors

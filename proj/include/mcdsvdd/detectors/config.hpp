#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/nn/network.hpp"
#include "mcdsvdd/nn/optimizer.hpp"

namespace mcdsvdd::detectors {

using nn::Matrix;
using nn::Vector;

enum class DetectorKind { iforest, ocsvm, ae, vae, dsvdd, mcdsvdd };

inline const std::vector<DetectorKind>& all_detector_kinds() {
  static const std::vector<DetectorKind> kinds = {DetectorKind::iforest, DetectorKind::ocsvm, DetectorKind::ae,
                                                  DetectorKind::vae,     DetectorKind::dsvdd, DetectorKind::mcdsvdd};
  return kinds;
}

inline std::string to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::iforest: return "iforest";
    case DetectorKind::ocsvm: return "ocsvm";
    case DetectorKind::ae: return "ae";
    case DetectorKind::vae: return "vae";
    case DetectorKind::dsvdd: return "dsvdd";
    case DetectorKind::mcdsvdd: return "mcdsvdd";
  }
  return "?";
}

// Row label used in rendered tables.
inline std::string display_name(DetectorKind k) {
  switch (k) {
    case DetectorKind::iforest: return "IForest";
    case DetectorKind::ocsvm: return "OCSVM";
    case DetectorKind::ae: return "AE";
    case DetectorKind::vae: return "VAE";
    case DetectorKind::dsvdd: return "Deep SVDD";
    case DetectorKind::mcdsvdd: return "MCDSVDD";
  }
  return "?";
}

inline DetectorKind detector_kind_from_string(const std::string& s) {
  for (auto k : all_detector_kinds()) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown detector '" + s + "' (expected iforest, ocsvm, ae, vae, dsvdd or mcdsvdd)");
}

inline bool is_deep(DetectorKind k) { return k != DetectorKind::iforest && k != DetectorKind::ocsvm; }

// Encoder d -> hidden... -> latent; the decoder mirrors it and ends in tanh.
struct ArchitectureConfig {
  std::vector<std::size_t> hidden{512, 256, 128};
  std::size_t latent = 64;
  bool batch_norm = true;
  bool latent_batch_norm = true;
  nn::Activation latent_activation = nn::Activation::leaky_relu;
};

struct TrainingConfig {
  nn::OptimizerConfig optimizer;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  double weight_decay = 0.5e-6;
  // Share of the training rows held out for early stopping when the caller
  // supplies no validation set.
  double validation_fraction = 0.1;
};

enum class HypersphereObjective { one_class, soft_boundary };

struct HypersphereConfig {
  HypersphereObjective objective = HypersphereObjective::one_class;
  double nu = 0.1;
  std::size_t radius_update_every = 5;
  double center_floor = 0.05;
  bool pretrain = true;
  std::size_t noise_probes = 32;
};

struct VaeConfig {
  std::size_t score_samples = 10;
  double kl_weight = 1.0;
};

struct IForestConfig {
  std::size_t trees = 100;
  std::size_t subsample = 256;
  double contamination = 0.1;
};

struct OcsvmConfig {
  double nu = 0.01;
  std::optional<double> gamma;  // empty: 1 / (d * mean feature variance)
  double tolerance = 1e-4;
  std::size_t cache_megabytes = 256;
};

struct DetectorConfig {
  DetectorKind kind = DetectorKind::mcdsvdd;
  ArchitectureConfig architecture;
  TrainingConfig training;
  HypersphereConfig hypersphere;
  VaeConfig vae;
  IForestConfig iforest;
  OcsvmConfig ocsvm;

  static DetectorConfig defaults(DetectorKind kind) {
    DetectorConfig c;
    c.kind = kind;
    return c;
  }

  void validate() const {
    if (architecture.latent == 0) throw ConfigError("architecture.latent must be positive");
    for (auto h : architecture.hidden) {
      if (h == 0) throw ConfigError("architecture.hidden entries must be positive");
    }
    if (training.batch_size < 2) throw ConfigError("training.batch_size must be at least 2");
    if (training.max_epochs == 0) throw ConfigError("training.max_epochs must be positive");
    if (!(training.optimizer.learning_rate > 0.0)) throw ConfigError("training.learning_rate must be positive");
    if (training.weight_decay < 0.0) throw ConfigError("training.weight_decay must be non-negative");
    if (!(training.validation_fraction > 0.0 && training.validation_fraction < 1.0)) {
      throw ConfigError("training.validation_fraction must lie in (0, 1)");
    }
    if (!(hypersphere.nu > 0.0 && hypersphere.nu <= 1.0)) throw ConfigError("hypersphere.nu must lie in (0, 1]");
    if (hypersphere.radius_update_every == 0) throw ConfigError("hypersphere.radius_update_every must be positive");
    if (hypersphere.center_floor < 0.0) throw ConfigError("hypersphere.center_floor must be non-negative");
    if (vae.score_samples == 0) throw ConfigError("vae.score_samples must be at least 1");
    if (vae.kl_weight < 0.0) throw ConfigError("vae.kl_weight must be non-negative");
    if (iforest.trees == 0 || iforest.subsample < 2) throw ConfigError("iforest needs trees >= 1 and subsample >= 2");
    if (!(iforest.contamination > 0.0 && iforest.contamination < 0.5)) {
      throw ConfigError("iforest.contamination must lie in (0, 0.5)");
    }
    if (!(ocsvm.nu > 0.0 && ocsvm.nu <= 1.0)) throw ConfigError("ocsvm.nu must lie in (0, 1]");
    if (ocsvm.gamma && !(*ocsvm.gamma > 0.0)) throw ConfigError("ocsvm.gamma must be positive");
    if (!(ocsvm.tolerance > 0.0)) throw ConfigError("ocsvm.tolerance must be positive");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + where + "." + key + "'");
  }
}

}  // namespace detail

inline nlohmann::json to_json(const DetectorConfig& c) {
  nlohmann::json gamma = c.ocsvm.gamma ? nlohmann::json(*c.ocsvm.gamma) : nlohmann::json("auto");
  return {
      {"kind", to_string(c.kind)},
      {"architecture",
       {{"hidden", c.architecture.hidden},
        {"latent", c.architecture.latent},
        {"batch_norm", c.architecture.batch_norm},
        {"latent_batch_norm", c.architecture.latent_batch_norm},
        {"latent_activation", nn::to_string(c.architecture.latent_activation)}}},
      {"training",
       {{"optimizer", c.training.optimizer.algorithm == nn::Algorithm::adam ? "adam" : "sgd"},
        {"learning_rate", c.training.optimizer.learning_rate},
        {"beta1", c.training.optimizer.beta1},
        {"beta2", c.training.optimizer.beta2},
        {"epsilon", c.training.optimizer.epsilon},
        {"batch_size", c.training.batch_size},
        {"max_epochs", c.training.max_epochs},
        {"patience", c.training.patience},
        {"weight_decay", c.training.weight_decay},
        {"validation_fraction", c.training.validation_fraction}}},
      {"hypersphere",
       {{"objective", c.hypersphere.objective == HypersphereObjective::one_class ? "one_class" : "soft_boundary"},
        {"nu", c.hypersphere.nu},
        {"radius_update_every", c.hypersphere.radius_update_every},
        {"center_floor", c.hypersphere.center_floor},
        {"pretrain", c.hypersphere.pretrain},
        {"noise_probes", c.hypersphere.noise_probes}}},
      {"vae", {{"score_samples", c.vae.score_samples}, {"kl_weight", c.vae.kl_weight}}},
      {"iforest",
       {{"trees", c.iforest.trees}, {"subsample", c.iforest.subsample}, {"contamination", c.iforest.contamination}}},
      {"ocsvm",
       {{"nu", c.ocsvm.nu},
        {"gamma", gamma},
        {"tolerance", c.ocsvm.tolerance},
        {"cache_megabytes", c.ocsvm.cache_megabytes}}},
  };
}

// Overlays the keys present in `j` onto `base`. Unknown keys are rejected so
// that typos do not silently fall back to defaults.
inline DetectorConfig detector_config_from_json(const nlohmann::json& j, DetectorConfig base) {
  using detail::read;
  detail::reject_unknown(j, {"kind", "architecture", "training", "hypersphere", "vae", "iforest", "ocsvm"}, "detector");
  if (j.contains("kind")) base.kind = detector_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("architecture")) {
    const auto& a = j.at("architecture");
    detail::reject_unknown(a, {"hidden", "latent", "batch_norm", "latent_batch_norm", "latent_activation"},
                           "architecture");
    read(a, "hidden", base.architecture.hidden, "architecture");
    read(a, "latent", base.architecture.latent, "architecture");
    read(a, "batch_norm", base.architecture.batch_norm, "architecture");
    read(a, "latent_batch_norm", base.architecture.latent_batch_norm, "architecture");
    if (a.contains("latent_activation")) {
      base.architecture.latent_activation = nn::activation_from_string(a.at("latent_activation").get<std::string>());
    }
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    detail::reject_unknown(t,
                           {"optimizer", "learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs",
                            "patience", "weight_decay", "validation_fraction"},
                           "training");
    if (t.contains("optimizer")) {
      const auto name = t.at("optimizer").get<std::string>();
      if (name == "adam") {
        base.training.optimizer.algorithm = nn::Algorithm::adam;
      } else if (name == "sgd") {
        base.training.optimizer.algorithm = nn::Algorithm::sgd;
      } else {
        throw ConfigError("training.optimizer must be 'adam' or 'sgd'");
      }
    }
    read(t, "learning_rate", base.training.optimizer.learning_rate, "training");
    read(t, "beta1", base.training.optimizer.beta1, "training");
    read(t, "beta2", base.training.optimizer.beta2, "training");
    read(t, "epsilon", base.training.optimizer.epsilon, "training");
    read(t, "batch_size", base.training.batch_size, "training");
    read(t, "max_epochs", base.training.max_epochs, "training");
    read(t, "patience", base.training.patience, "training");
    read(t, "weight_decay", base.training.weight_decay, "training");
    read(t, "validation_fraction", base.training.validation_fraction, "training");
  }
  if (j.contains("hypersphere")) {
    const auto& h = j.at("hypersphere");
    detail::reject_unknown(h, {"objective", "nu", "radius_update_every", "center_floor", "pretrain", "noise_probes"},
                           "hypersphere");
    if (h.contains("objective")) {
      const auto name = h.at("objective").get<std::string>();
      if (name == "one_class") {
        base.hypersphere.objective = HypersphereObjective::one_class;
      } else if (name == "soft_boundary") {
        base.hypersphere.objective = HypersphereObjective::soft_boundary;
      } else {
        throw ConfigError("hypersphere.objective must be 'one_class' or 'soft_boundary'");
      }
    }
    read(h, "nu", base.hypersphere.nu, "hypersphere");
    read(h, "radius_update_every", base.hypersphere.radius_update_every, "hypersphere");
    read(h, "center_floor", base.hypersphere.center_floor, "hypersphere");
    read(h, "pretrain", base.hypersphere.pretrain, "hypersphere");
    read(h, "noise_probes", base.hypersphere.noise_probes, "hypersphere");
  }
  if (j.contains("vae")) {
    const auto& v = j.at("vae");
    detail::reject_unknown(v, {"score_samples", "kl_weight"}, "vae");
    read(v, "score_samples", base.vae.score_samples, "vae");
    read(v, "kl_weight", base.vae.kl_weight, "vae");
  }
  if (j.contains("iforest")) {
    const auto& f = j.at("iforest");
    detail::reject_unknown(f, {"trees", "subsample", "contamination"}, "iforest");
    read(f, "trees", base.iforest.trees, "iforest");
    read(f, "subsample", base.iforest.subsample, "iforest");
    read(f, "contamination", base.iforest.contamination, "iforest");
  }
  if (j.contains("ocsvm")) {
    const auto& o = j.at("ocsvm");
    detail::reject_unknown(o, {"nu", "gamma", "tolerance", "cache_megabytes"}, "ocsvm");
    read(o, "nu", base.ocsvm.nu, "ocsvm");
    if (o.contains("gamma")) {
      const auto& g = o.at("gamma");
      if (g.is_string() && g.get<std::string>() == "auto") {
        base.ocsvm.gamma.reset();
      } else if (g.is_number()) {
        base.ocsvm.gamma = g.get<double>();
      } else {
        throw ConfigError("ocsvm.gamma must be a number or \"auto\"");
      }
    }
    read(o, "tolerance", base.ocsvm.tolerance, "ocsvm");
    read(o, "cache_megabytes", base.ocsvm.cache_megabytes, "ocsvm");
  }
  base.validate();
  return base;
}

inline DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  const auto kind = detector_kind_from_string(j.at("kind").get<std::string>());
  return detector_config_from_json(j, DetectorConfig::defaults(kind));
}

}  // namespace mcdsvdd::detectors

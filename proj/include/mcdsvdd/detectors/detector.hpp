#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/digest.hpp"
#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/data/dataset.hpp"
#include "mcdsvdd/data/normalizer.hpp"
#include "mcdsvdd/detectors/autoencoder.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/detectors/hypersphere.hpp"
#include "mcdsvdd/detectors/iforest.hpp"
#include "mcdsvdd/detectors/ocsvm.hpp"
#include "mcdsvdd/detectors/training.hpp"
#include "mcdsvdd/detectors/vae.hpp"

namespace mcdsvdd::detectors {

using Payload = std::variant<IForestModel, OcsvmModel, AutoencoderModel, VaeModel, HypersphereModel>;

// What training observed, kept for the model card.
struct FitReport {
  std::vector<std::string> warnings;
  std::vector<double> collapse_trace;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
  nlohmann::json history = nlohmann::json::object();
};

// A fitted detector of any variant together with the normalizer its inputs
// pass through. Higher scores mean more anomalous.
struct DetectorModel {
  DetectorConfig config;
  data::QuantileNormalizer normalizer;
  Payload payload;
  std::uint64_t seed = 0;
  FitReport report;

  DetectorKind kind() const { return config.kind; }
  std::size_t dim() const { return normalizer.dim(); }

  std::vector<double> score_normalized(const Matrix& x) const {
    return std::visit(
        [&](const auto& m) -> std::vector<double> {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, IForestModel>) return score_iforest(m, x);
          if constexpr (std::is_same_v<T, OcsvmModel>) return score_ocsvm(m, x);
          if constexpr (std::is_same_v<T, AutoencoderModel>) return score_autoencoder(m, x);
          if constexpr (std::is_same_v<T, VaeModel>) return score_vae(m, x);
          if constexpr (std::is_same_v<T, HypersphereModel>) return score_hypersphere(m, x);
        },
        payload);
  }

  // One score per row of raw (unnormalized) features, in row order.
  std::vector<double> score(const Matrix& raw) const {
    if (static_cast<std::size_t>(raw.cols()) != dim()) {
      throw ShapeError("input has " + std::to_string(raw.cols()) + " features, model expects " +
                       std::to_string(dim()));
    }
    return score_normalized(normalizer.transform(raw));
  }

  std::vector<double> score(const data::Dataset& raw) const { return score(raw.features()); }
};

// Fits `config` on raw `train`. The normalizer is fitted on `train` unless
// one is supplied. Deep variants early-stop on `validation` when it is
// non-empty, otherwise on a stratified share split off `train`.
inline DetectorModel fit_detector(const DetectorConfig& config, const data::Dataset& train,
                                  const data::Dataset& validation, std::uint64_t seed,
                                  const data::QuantileNormalizer* normalizer = nullptr) {
  config.validate();
  if (train.size() < 2) throw ShapeError("training set needs at least 2 rows");
  DetectorModel model;
  model.config = config;
  model.seed = seed;
  model.normalizer = normalizer != nullptr ? *normalizer : data::QuantileNormalizer::fit(train);
  if (model.normalizer.dim() != train.dim()) throw ShapeError("normalizer dimensionality does not match data");

  if (!is_deep(config.kind)) {
    const Matrix x = model.normalizer.transform(train.features());
    if (config.kind == DetectorKind::iforest) {
      model.payload = fit_iforest(x, config.iforest, derive_seed(seed, {"iforest"}));
    } else {
      auto m = fit_ocsvm(x, config.ocsvm);
      model.report.history = {{"iterations", m.iterations}, {"gap", m.gap}};
      model.payload = std::move(m);
    }
    return model;
  }

  data::Dataset fit_rows = train;
  data::Dataset val_rows = validation;
  if (val_rows.empty()) {
    std::tie(fit_rows, val_rows) = split_validation(train, config.training.validation_fraction,
                                                    derive_seed(seed, {"validation-split"}), model.report.warnings);
  }
  if (fit_rows.size() < 2) throw ShapeError("training set needs at least 2 rows after the validation split");
  const auto classes = sorted_subclasses(fit_rows);
  HypersphereData d;
  d.x = model.normalizer.transform(fit_rows.features());
  d.assignment = class_indices(fit_rows, classes);
  d.validation = model.normalizer.transform(val_rows.features());
  d.validation_assignment = class_indices(val_rows, classes);
  d.classes = classes;
  const auto& arch = config.architecture;
  const auto& tc = config.training;
  const std::uint64_t s = derive_seed(seed, {to_string(config.kind)});
  switch (config.kind) {
    case DetectorKind::ae: {
      auto fit = train_autoencoder(d.x, d.assignment, d.validation, arch, tc, s);
      model.report.validation_loss = fit.history.best_validation_loss;
      model.report.history = fit.history.to_json();
      model.payload = std::move(fit.model);
      break;
    }
    case DetectorKind::vae: {
      auto fit = train_vae(d.x, d.assignment, d.validation, arch, tc, config.vae, s);
      model.report.validation_loss = fit.history.best_validation_loss;
      model.report.history = fit.history.to_json();
      model.payload = std::move(fit.model);
      break;
    }
    default: {
      auto fit = config.kind == DetectorKind::dsvdd ? train_deep_svdd(d, arch, tc, config.hypersphere, s)
                                                    : train_mcdsvdd(d, arch, tc, config.hypersphere, s);
      model.report.validation_loss = fit.history.best_validation_loss;
      model.report.history = fit.history.to_json();
      if (fit.pretraining) model.report.history["pretraining"] = fit.pretraining->to_json();
      model.report.collapse_trace = fit.collapse_trace;
      for (auto& w : fit.warnings) model.report.warnings.push_back(std::move(w));
      model.payload = std::move(fit.model);
      break;
    }
  }
  return model;
}

inline nlohmann::json payload_to_json(const Payload& p) {
  return std::visit([](const auto& m) { return to_json(m); }, p);
}

inline Payload payload_from_json(DetectorKind kind, const nlohmann::json& j) {
  switch (kind) {
    case DetectorKind::iforest: return iforest_from_json(j);
    case DetectorKind::ocsvm: return ocsvm_from_json(j);
    case DetectorKind::ae: return autoencoder_from_json(j);
    case DetectorKind::vae: return vae_from_json(j);
    case DetectorKind::dsvdd:
    case DetectorKind::mcdsvdd: return hypersphere_from_json(j);
  }
  throw FormatError("unknown detector kind");
}

// Serialized model plus its provenance. `manifest` describes the training
// data (scenario, subclass counts, ids digest) and is free-form.
struct ModelCard {
  DetectorModel model;
  nlohmann::json manifest = nlohmann::json::object();
  std::vector<double> fill_values;
};

inline constexpr const char* kCardFormat = "mcdsvdd.model-card";

inline std::string card_checksum(const nlohmann::json& body) { return hex_digest(body.dump()); }

inline std::string serialize_card(const ModelCard& card) {
  const auto& m = card.model;
  const double vl = m.report.validation_loss;
  nlohmann::json body = {
      {"format", kCardFormat},
      {"version", 1},
      {"detector", to_string(m.kind())},
      {"config", to_json(m.config)},
      {"seed", m.seed},
      {"normalizer", m.normalizer.to_json()},
      {"fill_values", card.fill_values},
      {"manifest", card.manifest},
      {"model", payload_to_json(m.payload)},
      {"collapse_trace", m.report.collapse_trace},
      {"validation_loss", std::isfinite(vl) ? nlohmann::json(vl) : nlohmann::json(nullptr)},
      {"training", m.report.history},
      {"warnings", m.report.warnings},
  };
  body["checksum"] = card_checksum(body);
  return body.dump(1) + "\n";
}

inline ModelCard parse_card(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(std::string("model card is corrupted (not valid JSON): ") + e.what());
  }
  if (!j.is_object() || !j.contains("checksum") || !j.at("checksum").is_string()) {
    throw ChecksumError("model card has no checksum");
  }
  const auto stored = j.at("checksum").get<std::string>();
  j.erase("checksum");
  if (card_checksum(j) != stored) throw ChecksumError("model card checksum mismatch; the file is corrupted");
  try {
    if (j.at("format") != kCardFormat) throw FormatError("not a model card");
    ModelCard card;
    auto& m = card.model;
    m.config = detector_config_from_json(j.at("config"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.normalizer = data::QuantileNormalizer::from_json(j.at("normalizer"));
    m.payload = payload_from_json(m.config.kind, j.at("model"));
    m.report.collapse_trace = j.at("collapse_trace").get<std::vector<double>>();
    if (!j.at("validation_loss").is_null()) m.report.validation_loss = j.at("validation_loss").get<double>();
    m.report.history = j.at("training");
    m.report.warnings = j.at("warnings").get<std::vector<std::string>>();
    card.manifest = j.at("manifest");
    card.fill_values = j.at("fill_values").get<std::vector<double>>();
    return card;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model card: ") + e.what());
  }
}

inline void save_card(const ModelCard& card, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write model card '" + path.string() + "'");
  out << serialize_card(card);
}

inline ModelCard load_card(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot read model card '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_card(ss.str());
}

// Fit/score contract shared by real detectors and test stubs.
class FittedDetector {
 public:
  virtual ~FittedDetector() = default;
  virtual std::vector<double> score(const data::Dataset& raw) const = 0;
  virtual std::vector<std::string> warnings() const { return {}; }
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string name() const = 0;
  // `normalizer`, when given, replaces the one fitted on `train`.
  virtual std::unique_ptr<FittedDetector> fit(const data::Dataset& train, const data::Dataset& validation,
                                              std::uint64_t seed, const data::QuantileNormalizer* normalizer) const = 0;
};

class FittedModel : public FittedDetector {
 public:
  explicit FittedModel(DetectorModel model) : model_(std::move(model)) {}
  std::vector<double> score(const data::Dataset& raw) const override { return model_.score(raw); }
  std::vector<std::string> warnings() const override { return model_.report.warnings; }
  const DetectorModel& model() const { return model_; }

 private:
  DetectorModel model_;
};

class ModelDetector : public Detector {
 public:
  explicit ModelDetector(DetectorConfig config) : config_(std::move(config)) {}
  std::string name() const override { return to_string(config_.kind); }
  const DetectorConfig& config() const { return config_; }
  std::unique_ptr<FittedDetector> fit(const data::Dataset& train, const data::Dataset& validation, std::uint64_t seed,
                                      const data::QuantileNormalizer* normalizer) const override {
    return std::make_unique<FittedModel>(fit_detector(config_, train, validation, seed, normalizer));
  }

 private:
  DetectorConfig config_;
};

}  // namespace mcdsvdd::detectors

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/digest.hpp"
#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/data/dataset.hpp"
#include "mcdsvdd/data/synthetic.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/evaluation/protocol.hpp"

namespace mcdsvdd::cli {

namespace fs = std::filesystem;

// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutputDirEnv = "MCDSVDD_OUTPUT_DIR";

// Everything a benchmark or training run needs. Loaded from a JSON file:
//
//   {
//     "seed": 7,
//     "dataset": "features.csv"            (or "synthetic": {spec} | "spec.json"),
//     "taxonomy": "ztf" | "infer",
//     "detector_defaults": {"training": {"max_epochs": 50}},
//     "detectors": ["iforest", {"kind": "mcdsvdd", "architecture": {"latent": 8}}],
//     "protocol": {"folds": 5},
//     "cells": [{"top_class": "periodic", "outlier_subclass": "RRL"}],
//     "output_dir": "out",
//     "jobs": 1
//   }
//
// Relative paths are resolved against the config file's directory.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> dataset;
  std::string dataset_text;  // the path as written, used for the digest
  std::optional<data::SyntheticSpec> synthetic;
  nlohmann::json synthetic_json;
  bool infer_taxonomy = false;
  nlohmann::json detector_defaults = nlohmann::json::object();
  std::vector<nlohmann::json> detector_overlays;  // one entry per listed detector, each with "kind"
  evaluation::ProtocolConfig protocol;
  std::vector<evaluation::Cell> cells;  // empty: every subclass present
  fs::path output_dir = "mcdsvdd-out";
  std::size_t jobs = 1;

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("seed is mandatory: set \"seed\" in the config or pass --seed");
    return *seed;
  }

  std::vector<std::string> detector_names() const {
    std::vector<std::string> out;
    for (const auto& o : detector_overlays) out.push_back(o.at("kind").get<std::string>());
    return out;
  }

  detectors::DetectorConfig detector_config(const std::string& name) const {
    const auto kind = detectors::detector_kind_from_string(name);
    auto c = detectors::detector_config_from_json(detector_defaults, detectors::DetectorConfig::defaults(kind));
    c.kind = kind;
    for (const auto& o : detector_overlays) {
      if (o.at("kind") == name) return detectors::detector_config_from_json(o, c);
    }
    return c;
  }

  // Keeps only the named detectors, in the given order. Names missing from
  // the file run with defaults.
  void select_detectors(const std::vector<std::string>& names) {
    std::vector<nlohmann::json> kept;
    for (const auto& n : names) {
      (void)detectors::detector_kind_from_string(n);
      nlohmann::json o = {{"kind", n}};
      for (const auto& existing : detector_overlays) {
        if (existing.at("kind") == n) o = existing;
      }
      for (const auto& k : kept) {
        if (k.at("kind") == n) throw ConfigError("detector '" + n + "' listed twice");
      }
      kept.push_back(o);
    }
    detector_overlays = std::move(kept);
  }

  // The settings that determine results. Output location and worker count
  // are excluded since they never change what is computed.
  nlohmann::json effective_json() const {
    nlohmann::json dets = nlohmann::json::array();
    for (const auto& n : detector_names()) dets.push_back(detectors::to_json(detector_config(n)));
    nlohmann::json cells_json = nlohmann::json::array();
    for (const auto& c : cells) cells_json.push_back({{"top_class", c.top_class}, {"outlier_subclass", c.outlier_subclass}});
    nlohmann::json j = {
        {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)},
        {"taxonomy", infer_taxonomy ? "infer" : "ztf"},
        {"detectors", dets},
        {"protocol", evaluation::to_json(protocol)},
        {"cells", cells_json},
    };
    if (dataset) j["dataset"] = dataset_text;
    if (synthetic) j["synthetic"] = synthetic_json;
    return j;
  }

  std::string digest() const { return hex_digest(effective_json().dump()); }

  // Parsed dataset and the per-feature fill values used for missing cells.
  data::ParseReport load_data() const {
    if (synthetic) {
      data::ParseReport r;
      r.dataset = data::generate_synthetic(*synthetic, derive_seed(require_seed(), {"synthetic"}));
      r.fill_values.assign(r.dataset.dim(), 0.0);
      return r;
    }
    if (!dataset) throw ConfigError("config names neither \"dataset\" nor \"synthetic\"");
    data::ParseOptions options;
    if (infer_taxonomy) options.taxonomy.reset();
    return data::parse_dataset(*dataset, options);
  }

  std::vector<evaluation::Cell> cells_for(const data::Dataset& d) const {
    return cells.empty() ? evaluation::default_cells(d) : cells;
  }
};

namespace detail {

inline nlohmann::json read_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(what) + " '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    } else if (key == "dataset") {
      c.dataset_text = detail::get_field<std::string>(j, "dataset");
      c.dataset = resolve(c.dataset_text);
    } else if (key == "synthetic") {
      c.synthetic_json = value.is_string() ? detail::read_json_file(resolve(value.get<std::string>()), "synthetic spec")
                                           : value;
      c.synthetic = data::SyntheticSpec::from_json(c.synthetic_json);
    } else if (key == "taxonomy") {
      const auto t = detail::get_field<std::string>(j, "taxonomy");
      if (t != "ztf" && t != "infer") throw ConfigError("taxonomy must be 'ztf' or 'infer'");
      c.infer_taxonomy = t == "infer";
    } else if (key == "detector_defaults") {
      if (!value.is_object() || value.contains("kind")) {
        throw ConfigError("detector_defaults must be an object without 'kind'");
      }
      c.detector_defaults = value;
    } else if (key == "detectors") {
      if (!value.is_array()) throw ConfigError("detectors must be an array");
      for (const auto& d : value) {
        if (d.is_string()) {
          c.detector_overlays.push_back({{"kind", d}});
        } else if (d.is_object() && d.contains("kind") && d.at("kind").is_string()) {
          c.detector_overlays.push_back(d);
        } else {
          throw ConfigError("detectors entries must be a name or an object with 'kind'");
        }
      }
    } else if (key == "protocol") {
      c.protocol = evaluation::protocol_config_from_json(value);
    } else if (key == "cells") {
      if (!value.is_array()) throw ConfigError("cells must be an array");
      for (const auto& cell : value) {
        c.cells.push_back({detail::get_field<std::string>(cell, "top_class"),
                           detail::get_field<std::string>(cell, "outlier_subclass")});
      }
    } else if (key == "output_dir") {
      c.output_dir = resolve(detail::get_field<std::string>(j, "output_dir"));
    } else if (key == "jobs") {
      c.jobs = detail::get_field<std::size_t>(j, "jobs");
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }
  if (c.dataset && c.synthetic) throw ConfigError("config names both \"dataset\" and \"synthetic\"");
  if (c.detector_overlays.empty()) {
    for (auto k : detectors::all_detector_kinds()) c.detector_overlays.push_back({{"kind", detectors::to_string(k)}});
  }
  auto names = c.detector_names();
  c.select_detectors(names);
  for (const auto& n : names) (void)c.detector_config(n);
  return c;
}

inline RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(detail::read_json_file(path, "config"), path.parent_path());
}

// Applies the output-directory environment override and checks that every
// input path exists.
inline void finalize(RunConfig& c, const std::optional<std::string>& cli_output_dir) {
  if (cli_output_dir) {
    c.output_dir = *cli_output_dir;
  } else if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
    c.output_dir = env;
  }
  if (c.jobs == 0) throw ConfigError("jobs must be at least 1");
  if (c.dataset && !fs::exists(*c.dataset)) {
    throw ConfigError("dataset path '" + c.dataset->string() + "' does not exist");
  }
}

}  // namespace mcdsvdd::cli

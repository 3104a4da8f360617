#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/parallel.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/data/dataset.hpp"
#include "mcdsvdd/data/normalizer.hpp"
#include "mcdsvdd/data/scenario.hpp"
#include "mcdsvdd/data/split.hpp"
#include "mcdsvdd/detectors/detector.hpp"
#include "mcdsvdd/evaluation/auroc.hpp"
#include "mcdsvdd/evaluation/stats.hpp"

namespace mcdsvdd::evaluation {

enum class NormalizerScope { per_fold, once };

// How data is split into folds and test sets. The normalizer is refit on
// every fold's training rows unless `normalizer_scope` is `once`, in which
// case a single normalizer is fitted on the whole training partition.
struct ProtocolConfig {
  double test_fraction = 0.2;
  double outlier_fraction = 0.1;
  std::size_t folds = 5;
  std::size_t n_quantiles = data::QuantileNormalizer::kDefaultQuantiles;
  NormalizerScope normalizer_scope = NormalizerScope::per_fold;

  void validate() const {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("protocol.test_fraction must lie in (0, 1)");
    if (!(outlier_fraction > 0.0 && outlier_fraction < 1.0)) {
      throw ConfigError("protocol.outlier_fraction must lie in (0, 1)");
    }
    if (folds < 2) throw ConfigError("protocol.folds must be >= 2");
    if (n_quantiles < 2) throw ConfigError("protocol.n_quantiles must be >= 2");
  }
};

inline nlohmann::json to_json(const ProtocolConfig& c) {
  return {{"test_fraction", c.test_fraction},
          {"outlier_fraction", c.outlier_fraction},
          {"folds", c.folds},
          {"n_quantiles", c.n_quantiles},
          {"normalizer_scope", c.normalizer_scope == NormalizerScope::once ? "once" : "per_fold"}};
}

// Overlays the keys present in `j` onto `base`.
inline ProtocolConfig protocol_config_from_json(const nlohmann::json& j, ProtocolConfig base = {}) {
  if (!j.is_object()) throw ConfigError("protocol: expected an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "test_fraction") {
        base.test_fraction = value.get<double>();
      } else if (key == "outlier_fraction") {
        base.outlier_fraction = value.get<double>();
      } else if (key == "folds") {
        base.folds = value.get<std::size_t>();
      } else if (key == "n_quantiles") {
        base.n_quantiles = value.get<std::size_t>();
      } else if (key == "normalizer_scope") {
        const auto s = value.get<std::string>();
        if (s != "once" && s != "per_fold") throw ConfigError("protocol.normalizer_scope must be 'once' or 'per_fold'");
        base.normalizer_scope = s == "once" ? NormalizerScope::once : NormalizerScope::per_fold;
      } else {
        throw ConfigError("unknown key 'protocol." + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("protocol: ") + e.what());
  }
  base.validate();
  return base;
}

struct FoldResult {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  double auroc = std::numeric_limits<double>::quiet_NaN();
  std::size_t train_rows = 0;
  std::size_t validation_rows = 0;
  std::size_t ts2_rows = 0;
  std::size_t ts2_outliers = 0;
  std::string error;  // empty on success
  std::string error_kind;
  std::vector<std::string> warnings;

  bool ok() const { return error.empty(); }
};

// Per-fold AUROCs of one detector on one (top class, outlier subclass)
// cell, with their mean and sample standard deviation.
struct EvalResult {
  std::string detector;
  std::string top_class;
  std::string outlier_subclass;
  std::vector<FoldResult> folds;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stddev = std::numeric_limits<double>::quiet_NaN();
  bool best = false;

  bool ok() const {
    return !folds.empty() && std::all_of(folds.begin(), folds.end(), [](const FoldResult& f) { return f.ok(); });
  }

  std::vector<double> aurocs() const {
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(f.auroc);
    return v;
  }

  // Mean and std over the folds; NaN unless every fold succeeded.
  void aggregate() {
    mean = stddev = std::numeric_limits<double>::quiet_NaN();
    if (!ok()) return;
    const auto s = summarize(aurocs());
    mean = s.mean;
    stddev = s.stddev;
  }

  std::string first_error() const {
    for (const auto& f : folds) {
      if (!f.ok()) return "fold " + std::to_string(f.fold) + ": " + f.error;
    }
    return {};
  }
};

// p-value for "a and b have the same mean fold AUROC".
inline double compare(const EvalResult& a, const EvalResult& b, TTest kind = TTest::welch) {
  if (!a.ok() || !b.ok()) throw MetricError("cannot compare results with failed folds");
  return t_test_p_value(a.aurocs(), b.aurocs(), kind);
}

inline std::string describe(const data::Scenario& s) {
  return "scenario " + s.top_class + "/" + s.outlier_subclass + " fold " + std::to_string(s.fold_index);
}

struct ScenarioOutcome {
  double auroc = 0.0;
  std::vector<std::string> warnings;
  std::unique_ptr<detectors::FittedDetector> fitted;
};

// Fits `detector` on the scenario's training rows and returns its AUROC on
// TS2. The normalizer is fitted on `scenario.train` unless one is given.
// Errors are rethrown with the scenario named in the message.
inline ScenarioOutcome run_scenario(const detectors::Detector& detector, const data::Scenario& scenario,
                                    std::uint64_t seed, const data::QuantileNormalizer* normalizer = nullptr,
                                    std::size_t n_quantiles = data::QuantileNormalizer::kDefaultQuantiles) {
  try {
    const auto fitted_norm = normalizer != nullptr ? *normalizer : data::QuantileNormalizer::fit(scenario.train, n_quantiles);
    ScenarioOutcome out;
    out.fitted = detector.fit(scenario.train, scenario.validation, seed, &fitted_norm);
    const auto scores = out.fitted->score(scenario.ts2);
    out.auroc = auroc(scores, scenario.ts2_outlier);
    out.warnings = scenario.warnings;
    for (auto& w : out.fitted->warnings()) out.warnings.push_back(std::move(w));
    return out;
  } catch (const Error& e) {
    throw Error(e.kind(), detector.name() + " on " + describe(scenario) + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error("internal", detector.name() + " on " + describe(scenario) + ": " + e.what());
  }
}

// The training/test partition shared by every detector and cell.
struct ProtocolData {
  data::Split split;
  std::optional<data::QuantileNormalizer> shared_normalizer;
};

inline ProtocolData prepare_protocol(const data::Dataset& dataset, const ProtocolConfig& config, std::uint64_t seed) {
  config.validate();
  ProtocolData d;
  d.split = data::stratified_split(dataset, config.test_fraction, derive_seed(seed, {"split"}));
  if (config.normalizer_scope == NormalizerScope::once) {
    d.shared_normalizer = data::QuantileNormalizer::fit(d.split.train, config.n_quantiles);
  }
  return d;
}

// Validation ids of each fold: the inliers of `top_class` in the training
// partition, dealt into k stratified folds.
inline std::vector<std::vector<std::string>> fold_validation_ids(const ProtocolData& d, const std::string& top_class,
                                                                const std::string& outlier_subclass,
                                                                const ProtocolConfig& config, std::uint64_t seed) {
  d.split.train.taxonomy().require(top_class, outlier_subclass);
  const auto inliers = d.split.train.filter(
      [&](const data::Sample& s) { return s.top_class == top_class && s.subclass != outlier_subclass; });
  const auto folds =
      data::stratified_kfold(inliers, config.folds, derive_seed(seed, {"folds", top_class, outlier_subclass}));
  std::vector<std::vector<std::string>> ids;
  for (const auto& f : folds) ids.push_back(f.validation.ids());
  return ids;
}

// Scenario for fold `fold`: the fold's validation rows leave the training
// set, TS2 draws its inliers from the test partition. Independent of the
// detector.
inline data::Scenario fold_scenario(const ProtocolData& d, const std::string& top_class,
                                    const std::string& outlier_subclass, std::size_t fold,
                                    const std::vector<std::string>& validation_ids, const ProtocolConfig& config,
                                    std::uint64_t seed) {
  auto sc = data::build_scenario(d.split.train, d.split.test, top_class, outlier_subclass, config.outlier_fraction,
                                 derive_seed(seed, {"ts2", top_class, outlier_subclass, std::to_string(fold)}), fold);
  data::hold_out_validation(sc, validation_ids);
  return sc;
}

inline std::uint64_t fold_seed(std::uint64_t seed, const std::string& detector, const std::string& top_class,
                               const std::string& outlier_subclass, std::size_t fold) {
  return derive_seed(seed, {detector, top_class, outlier_subclass, std::to_string(fold)});
}

// Called after each successful fit, possibly from a worker thread.
using FitObserver = std::function<void(const EvalResult& cell, const FoldResult& fold, const data::Scenario& scenario,
                                       const detectors::FittedDetector& fitted)>;

struct Cell {
  std::string top_class;
  std::string outlier_subclass;
};

// Every (top class, subclass) pair of the taxonomy whose subclass occurs in
// `dataset`, in taxonomy order.
inline std::vector<Cell> default_cells(const data::Dataset& dataset) {
  const auto counts = dataset.subclass_counts();
  std::vector<Cell> cells;
  for (const auto& top : dataset.taxonomy().top_classes()) {
    for (const auto& sub : dataset.taxonomy().subclasses(top)) {
      if (counts.count(sub) > 0) cells.push_back({top, sub});
    }
  }
  return cells;
}

struct BenchmarkResult {
  std::vector<EvalResult> cells;  // detector-major, then cell order

  std::size_t failed_cells() const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return !c.ok(); }));
  }
};

// Flags, per (top class, subclass) column, the successful cells with the
// highest mean AUROC.
inline void mark_best(std::vector<EvalResult>& cells) {
  std::map<std::pair<std::string, std::string>, double> best;
  for (const auto& c : cells) {
    if (!c.ok()) continue;
    auto key = std::make_pair(c.top_class, c.outlier_subclass);
    auto it = best.find(key);
    if (it == best.end() || c.mean > it->second) best[key] = c.mean;
  }
  for (auto& c : cells) {
    const auto it = best.find({c.top_class, c.outlier_subclass});
    c.best = c.ok() && it != best.end() && c.mean == it->second;
  }
}

// Runs k-fold evaluation of every detector on every cell. Jobs are
// (detector, cell, fold) triples executed on `workers` threads; results land
// in fixed slots, so output is identical for any worker count. A failing
// job marks its cell failed and the remaining jobs still run.
inline BenchmarkResult full_benchmark(const data::Dataset& dataset,
                                      const std::vector<const detectors::Detector*>& detectors,
                                      const std::vector<Cell>& cells, const ProtocolConfig& config,
                                      std::uint64_t seed, std::size_t workers = 1, const FitObserver& observer = {}) {
  config.validate();
  const auto prepared = prepare_protocol(dataset, config, seed);
  const std::size_t k = config.folds;

  std::vector<std::vector<std::vector<std::string>>> fold_ids(cells.size());
  std::vector<std::pair<std::string, std::string>> cell_errors(cells.size());  // (kind, message)
  for (std::size_t c = 0; c < cells.size(); ++c) {
    try {
      fold_ids[c] = fold_validation_ids(prepared, cells[c].top_class, cells[c].outlier_subclass, config, seed);
    } catch (const Error& e) {
      cell_errors[c] = {e.kind(), e.what()};
    }
  }

  BenchmarkResult result;
  for (const auto* det : detectors) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      EvalResult r;
      r.detector = det->name();
      r.top_class = cells[c].top_class;
      r.outlier_subclass = cells[c].outlier_subclass;
      r.folds.resize(k);
      for (std::size_t f = 0; f < k; ++f) {
        r.folds[f].fold = f;
        r.folds[f].seed = fold_seed(seed, r.detector, r.top_class, r.outlier_subclass, f);
        std::tie(r.folds[f].error_kind, r.folds[f].error) = cell_errors[c];
      }
      result.cells.push_back(std::move(r));
    }
  }

  const std::size_t jobs = result.cells.size() * k;
  parallel_for(jobs, workers, [&](std::size_t job) {
    auto& cell = result.cells[job / k];
    auto& fold = cell.folds[job % k];
    if (!fold.ok()) return;
    const std::size_t c = (job / k) % cells.size();
    const auto* det = detectors[(job / k) / cells.size()];
    try {
      const auto sc = fold_scenario(prepared, cell.top_class, cell.outlier_subclass, fold.fold, fold_ids[c][fold.fold],
                                    config, seed);
      fold.train_rows = sc.train.size();
      fold.validation_rows = sc.validation.size();
      fold.ts2_rows = sc.ts2.size();
      fold.ts2_outliers = sc.outlier_count();
      const auto* norm = prepared.shared_normalizer ? &*prepared.shared_normalizer : nullptr;
      auto out = run_scenario(*det, sc, fold.seed, norm, config.n_quantiles);
      fold.auroc = out.auroc;
      fold.warnings = std::move(out.warnings);
      if (observer) observer(cell, fold, sc, *out.fitted);
    } catch (const Error& e) {
      fold.error_kind = e.kind();
      fold.error = e.what();
    } catch (const std::exception& e) {
      fold.error_kind = "internal";
      fold.error = e.what();
    }
  });

  for (auto& cell : result.cells) cell.aggregate();
  mark_best(result.cells);
  return result;
}

// k-fold evaluation of a single detector on a single cell. The first fold
// error is rethrown.
inline EvalResult run_cv(const detectors::Detector& detector, const data::Dataset& dataset,
                         const std::string& top_class, const std::string& outlier_subclass,
                         const ProtocolConfig& config, std::uint64_t seed, std::size_t workers = 1) {
  dataset.taxonomy().require(top_class, outlier_subclass);
  auto r = full_benchmark(dataset, {&detector}, {{top_class, outlier_subclass}}, config, seed, workers);
  auto cell = std::move(r.cells.front());
  for (const auto& f : cell.folds) {
    if (!f.ok()) throw Error(f.error_kind, f.error);
  }
  cell.best = false;
  return cell;
}

}  // namespace mcdsvdd::evaluation

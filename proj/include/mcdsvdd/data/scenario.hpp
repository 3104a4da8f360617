#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/data/dataset.hpp"

namespace mcdsvdd::data {

// One leave-one-subclass-out evaluation: a detector is trained on `train`
// (inlier subclasses of `top_class` only), optionally early-stopped on
// `validation`, and evaluated on `ts2`.
struct Scenario {
  std::string top_class;
  std::string outlier_subclass;
  Dataset train;
  Dataset validation;
  Dataset ts2;
  std::vector<std::uint8_t> ts2_outlier;  // aligned with ts2 rows
  std::size_t fold_index = 0;
  std::uint64_t seed = 0;
  double achieved_outlier_fraction = 0.0;
  std::vector<std::string> warnings;

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(std::count(ts2_outlier.begin(), ts2_outlier.end(), 1));
  }
};

namespace detail {

inline std::vector<std::size_t> subsample_by_id(const Dataset& pool, std::size_t keep, Rng& rng) {
  auto rows = pool.order_by_id();
  if (keep < rows.size()) {
    rng.shuffle(std::span<std::size_t>(rows));
    rows.resize(keep);
  }
  return rows;
}

}  // namespace detail

// Assembles the training set and TS2 for one (top class, outlier subclass)
// pair. TS2 inliers come only from `test`; outliers come from both `train`
// and `test`. Whichever side exceeds the requested ratio is subsampled; all
// outliers are kept when they are the scarce side.
inline Scenario build_scenario(const Dataset& train, const Dataset& test, const std::string& top_class,
                               const std::string& outlier_subclass, double outlier_fraction,
                               std::uint64_t seed, std::size_t fold_index = 0) {
  train.taxonomy().require(top_class, outlier_subclass);
  if (!(outlier_fraction > 0.0 && outlier_fraction < 1.0)) {
    throw ScenarioError("outlier_fraction must lie in (0, 1)");
  }
  const auto is_inlier = [&](const Sample& s) {
    return s.top_class == top_class && s.subclass != outlier_subclass;
  };
  const auto is_outlier = [&](const Sample& s) { return s.subclass == outlier_subclass; };

  Scenario sc;
  sc.top_class = top_class;
  sc.outlier_subclass = outlier_subclass;
  sc.fold_index = fold_index;
  sc.seed = seed;
  sc.train = train.filter(is_inlier).sorted_by_id();
  sc.validation = train.empty_like();

  const Dataset inlier_pool = test.filter(is_inlier);
  const Dataset outlier_pool = train.filter(is_outlier).merged(test.filter(is_outlier));
  if (inlier_pool.empty()) {
    throw ScenarioError("no test inliers for top class '" + top_class + "' with outlier '" +
                        outlier_subclass + "'");
  }
  if (outlier_pool.empty()) {
    throw ScenarioError("no samples of outlier subclass '" + outlier_subclass + "'");
  }
  if (sc.train.empty()) {
    throw ScenarioError("no training inliers for top class '" + top_class + "'");
  }

  const double n_in = static_cast<double>(inlier_pool.size());
  const double n_out = static_cast<double>(outlier_pool.size());
  std::size_t keep_in = inlier_pool.size();
  std::size_t keep_out = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(n_in * outlier_fraction / (1.0 - outlier_fraction))));
  if (keep_out > outlier_pool.size()) {
    keep_out = outlier_pool.size();
    keep_in = std::min<std::size_t>(
        inlier_pool.size(),
        std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n_out * (1.0 - outlier_fraction) /
                                                                       outlier_fraction))));
    sc.warnings.push_back("only " + std::to_string(outlier_pool.size()) + " outlier(s) of '" +
                          outlier_subclass + "' available; inliers subsampled to " +
                          std::to_string(keep_in));
  }

  Rng rng(seed);
  const auto in_rows = detail::subsample_by_id(inlier_pool, keep_in, rng);
  const auto out_rows = detail::subsample_by_id(outlier_pool, keep_out, rng);

  Dataset ts2 = inlier_pool.select(in_rows).merged(outlier_pool.select(out_rows));
  const auto order = ts2.order_by_id();
  sc.ts2 = ts2.select(order);
  sc.ts2_outlier.reserve(order.size());
  for (const auto& s : sc.ts2.samples()) sc.ts2_outlier.push_back(is_outlier(s) ? 1 : 0);
  sc.achieved_outlier_fraction =
      static_cast<double>(keep_out) / static_cast<double>(keep_in + keep_out);
  return sc;
}

// Moves the samples whose ids appear in `validation_ids` out of
// `scenario.train` into `scenario.validation`.
inline void hold_out_validation(Scenario& scenario, const std::vector<std::string>& validation_ids) {
  const std::set<std::string> held(validation_ids.begin(), validation_ids.end());
  const auto in_held = [&](const Sample& s) { return held.count(s.id) > 0; };
  scenario.validation = scenario.validation.merged(scenario.train.filter(in_held)).sorted_by_id();
  scenario.train = scenario.train.filter([&](const Sample& s) { return !in_held(s); });
}

}  // namespace mcdsvdd::data

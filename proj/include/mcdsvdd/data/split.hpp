#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/data/dataset.hpp"

namespace mcdsvdd::data {

struct Split {
  Dataset train;
  Dataset test;
};

struct Fold {
  Dataset train;
  Dataset validation;
};

namespace detail {

// Row indices per subclass, each list sorted by id. Map order is by subclass
// name, so the RNG consumption order never depends on row order.
inline std::map<std::string, std::vector<std::size_t>> strata_by_id(const Dataset& data) {
  std::map<std::string, std::vector<std::size_t>> strata;
  for (auto i : data.order_by_id()) strata[data[i].subclass].push_back(i);
  return strata;
}

inline Dataset select_sorted(const Dataset& data, std::vector<std::size_t> rows) {
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) { return data[a].id < data[b].id; });
  return data.select(rows);
}

}  // namespace detail

// Per-subclass shuffled split. Each subclass contributes
// round(test_fraction * count) samples to the test part, clamped so both
// parts keep at least one sample. Outputs are sorted by id.
inline Split stratified_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw StratificationError("test_fraction must lie in (0, 1)");
  }
  Rng rng(seed);
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  for (auto& [subclass, rows] : detail::strata_by_id(data)) {
    if (rows.size() < 2) {
      throw StratificationError("subclass '" + subclass + "' has " + std::to_string(rows.size()) +
                                " sample(s); at least 2 are needed to stratify");
    }
    rng.shuffle(std::span<std::size_t>(rows));
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    n_test = std::clamp<std::size_t>(n_test, 1, rows.size() - 1);
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  return {detail::select_sorted(data, std::move(train_rows)), detail::select_sorted(data, std::move(test_rows))};
}

// k folds whose validation parts partition `data`; each subclass is dealt
// round-robin after a seeded shuffle, so its per-fold sizes differ by at most
// one. The starting fold rotates between subclasses to balance fold totals.
inline std::vector<Fold> stratified_kfold(const Dataset& data, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw StratificationError("k must be >= 2");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> fold_rows(k);
  std::size_t offset = 0;
  for (auto& [subclass, rows] : detail::strata_by_id(data)) {
    if (rows.size() < k) {
      throw StratificationError("subclass '" + subclass + "' has " + std::to_string(rows.size()) +
                                " sample(s); " + std::to_string(k) + "-fold splitting needs at least " +
                                std::to_string(k));
    }
    rng.shuffle(std::span<std::size_t>(rows));
    for (std::size_t i = 0; i < rows.size(); ++i) fold_rows[(offset + i) % k].push_back(rows[i]);
    offset = (offset + rows.size()) % k;
  }
  std::vector<Fold> folds;
  folds.reserve(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train_rows;
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) train_rows.insert(train_rows.end(), fold_rows[g].begin(), fold_rows[g].end());
    }
    folds.push_back({detail::select_sorted(data, std::move(train_rows)), detail::select_sorted(data, fold_rows[f])});
  }
  return folds;
}

}  // namespace mcdsvdd::data

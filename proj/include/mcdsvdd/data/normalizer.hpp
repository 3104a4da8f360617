#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mcdsvdd/core/digest.hpp"
#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/data/dataset.hpp"

namespace mcdsvdd::data {

// Per-feature empirical-CDF transform into [-1, 1].
//
// Fitting stores, per feature, the training values at `n_quantiles` evenly
// spaced probability levels (linear interpolation between order statistics).
// Equal grid values are merged into one knot whose CDF position is the mean
// of their levels; the first and last knots are pinned to 0 and 1. A value is
// mapped by interpolating its CDF position between knots and rescaling
// u -> 2u - 1. Values outside the training range clip to -1 / +1, and a
// constant feature maps to 0.
class QuantileNormalizer {
 public:
  static constexpr std::size_t kDefaultQuantiles = 1000;

  QuantileNormalizer() = default;

  // `n_quantiles` is capped at the number of training rows.
  static QuantileNormalizer fit(const Eigen::MatrixXd& train,
                                std::size_t n_quantiles = kDefaultQuantiles) {
    if (train.rows() < 2) throw ShapeError("quantile normalizer needs at least 2 training rows");
    if (n_quantiles < 2) throw ShapeError("n_quantiles must be >= 2");
    QuantileNormalizer q;
    q.n_quantiles_ = std::min<std::size_t>(n_quantiles, static_cast<std::size_t>(train.rows()));
    q.grids_.resize(static_cast<std::size_t>(train.cols()));
    std::vector<double> column(static_cast<std::size_t>(train.rows()));
    for (Eigen::Index j = 0; j < train.cols(); ++j) {
      for (Eigen::Index i = 0; i < train.rows(); ++i) column[static_cast<std::size_t>(i)] = train(i, j);
      std::sort(column.begin(), column.end());
      auto& grid = q.grids_[static_cast<std::size_t>(j)];
      grid.resize(q.n_quantiles_);
      const double last = static_cast<double>(column.size() - 1);
      for (std::size_t k = 0; k < q.n_quantiles_; ++k) {
        const double level = static_cast<double>(k) / static_cast<double>(q.n_quantiles_ - 1);
        const double pos = level * last;
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, column.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        grid[k] = frac == 0.0 ? column[lo] : column[lo] + frac * (column[hi] - column[lo]);
      }
      // Guard against interpolation rounding breaking monotonicity.
      for (std::size_t k = 1; k < grid.size(); ++k) grid[k] = std::max(grid[k], grid[k - 1]);
    }
    q.build_knots();
    return q;
  }

  static QuantileNormalizer fit(const Dataset& train, std::size_t n_quantiles = kDefaultQuantiles) {
    return fit(train.features(), n_quantiles);
  }

  std::size_t dim() const noexcept { return grids_.size(); }
  std::size_t n_quantiles() const noexcept { return n_quantiles_; }
  const std::vector<double>& grid(std::size_t feature) const { return grids_.at(feature); }

  // Features whose training values are all equal (mapped to 0).
  std::vector<std::size_t> constant_features() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < knots_.size(); ++j) {
      if (knots_[j].values.size() == 1) out.push_back(j);
    }
    return out;
  }

  double transform_value(std::size_t feature, double x) const {
    const Knots& k = knots_.at(feature);
    if (k.values.size() == 1) return 0.0;
    if (std::isnan(x)) return 0.0;
    if (x <= k.values.front()) return -1.0;
    if (x >= k.values.back()) return 1.0;
    auto it = std::upper_bound(k.values.begin(), k.values.end(), x);
    const auto hi = static_cast<std::size_t>(it - k.values.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - k.values[lo]) / (k.values[hi] - k.values[lo]);
    const double u = k.levels[lo] + t * (k.levels[hi] - k.levels[lo]);
    return std::clamp(2.0 * u - 1.0, -1.0, 1.0);
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    if (static_cast<std::size_t>(x.cols()) != dim()) {
      throw ShapeError("normalizer fitted on " + std::to_string(dim()) + " features, got " +
                       std::to_string(x.cols()));
    }
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        out(i, j) = transform_value(static_cast<std::size_t>(j), x(i, j));
      }
    }
    return out;
  }

  Dataset transform(const Dataset& data) const {
    if (data.dim() != dim()) {
      throw ShapeError("normalizer fitted on " + std::to_string(dim()) + " features, dataset has " +
                       std::to_string(data.dim()));
    }
    Dataset out = data.empty_like();
    for (Sample s : data.samples()) {
      for (std::size_t j = 0; j < s.features.size(); ++j) s.features[j] = transform_value(j, s.features[j]);
      out.add(std::move(s));
    }
    return out;
  }

  nlohmann::json to_json() const { return {{"n_quantiles", n_quantiles_}, {"grids", grids_}}; }

  static QuantileNormalizer from_json(const nlohmann::json& j) {
    QuantileNormalizer q;
    q.n_quantiles_ = j.at("n_quantiles").get<std::size_t>();
    q.grids_ = j.at("grids").get<std::vector<std::vector<double>>>();
    for (const auto& g : q.grids_) {
      if (g.empty() || !std::is_sorted(g.begin(), g.end())) {
        throw FormatError("normalizer grid must be non-empty and non-decreasing");
      }
    }
    q.build_knots();
    return q;
  }

  std::string digest() const { return hex_digest(to_json().dump()); }

 private:
  struct Knots {
    std::vector<double> values;
    std::vector<double> levels;
  };

  void build_knots() {
    knots_.clear();
    knots_.reserve(grids_.size());
    for (const auto& grid : grids_) {
      Knots k;
      const std::size_t n = grid.size();
      std::size_t i = 0;
      while (i < n) {
        std::size_t j = i;
        double level_sum = 0.0;
        while (j < n && grid[j] == grid[i]) {
          level_sum += n > 1 ? static_cast<double>(j) / static_cast<double>(n - 1) : 0.0;
          ++j;
        }
        k.values.push_back(grid[i]);
        k.levels.push_back(level_sum / static_cast<double>(j - i));
        i = j;
      }
      if (k.values.size() > 1) {
        k.levels.front() = 0.0;
        k.levels.back() = 1.0;
      }
      knots_.push_back(std::move(k));
    }
  }

  std::size_t n_quantiles_ = 0;
  std::vector<std::vector<double>> grids_;
  std::vector<Knots> knots_;
};

}  // namespace mcdsvdd::data

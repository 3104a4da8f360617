#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::detectors {

inline constexpr double kEulerGamma = 0.5772156649015329;

// Average path length of an unsuccessful search in a binary search tree of
// n points: 2H(n-1) - 2(n-1)/n with H(i) ~ ln i + gamma. H(1) = 1 exactly,
// so c(2) = 1.
inline double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  if (n <= 2.0) return 1.0;
  return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

// s = 2^(-E[h] / c(psi)).
inline double isolation_score(double mean_path_length, std::size_t subsample) {
  return std::exp2(-mean_path_length / average_path_length(static_cast<double>(subsample)));
}

struct IsolationNode {
  // Leaves have feature < 0 and record their training size.
  int feature = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t size = 0;
};

struct IsolationTree {
  std::vector<IsolationNode> nodes;  // node 0 is the root

  // Edges to the leaf plus the leaf's average-path credit.
  double path_length(const Eigen::RowVectorXd& x) const {
    std::size_t i = 0;
    double depth = 0.0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = x(n.feature) <= n.threshold ? n.left : n.right;
      depth += 1.0;
    }
    return depth + average_path_length(static_cast<double>(nodes[i].size));
  }
};

struct IForestModel {
  std::vector<IsolationTree> trees;
  std::size_t subsample = 256;
  std::size_t dim = 0;
  double contamination = 0.1;
  double threshold = 0.0;  // training-score quantile at 1 - contamination

  double mean_path_length(const Eigen::RowVectorXd& x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.path_length(x);
    return sum / static_cast<double>(trees.size());
  }

  double score_row(const Eigen::RowVectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != dim) {
      throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " + std::to_string(dim));
    }
    return isolation_score(mean_path_length(x), subsample);
  }
};

inline std::vector<double> score_iforest(const IForestModel& m, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = m.score_row(x.row(i));
  return out;
}

namespace detail {

inline std::uint32_t grow(IsolationTree& tree, const Matrix& x, std::vector<std::size_t>& rows, std::size_t begin,
                          std::size_t end, std::size_t depth, std::size_t max_depth, Rng& rng) {
  const auto id = static_cast<std::uint32_t>(tree.nodes.size());
  tree.nodes.push_back({});
  tree.nodes[id].size = static_cast<std::uint32_t>(end - begin);
  if (end - begin <= 1 || depth >= max_depth) return id;
  std::vector<int> candidates;
  std::vector<std::pair<double, double>> ranges;
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    double lo = x(static_cast<Eigen::Index>(rows[begin]), f);
    double hi = lo;
    for (std::size_t r = begin + 1; r < end; ++r) {
      const double v = x(static_cast<Eigen::Index>(rows[r]), f);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo) {
      candidates.push_back(static_cast<int>(f));
      ranges.emplace_back(lo, hi);
    }
  }
  if (candidates.empty()) return id;
  const auto pick = static_cast<std::size_t>(rng.index(candidates.size()));
  const int feature = candidates[pick];
  const auto [lo, hi] = ranges[pick];
  double threshold = rng.uniform(lo, hi);
  if (threshold >= hi) threshold = lo;  // keep the right side non-empty under rounding
  const auto mid_it = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                     rows.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t r) {
                                       return x(static_cast<Eigen::Index>(r), feature) <= threshold;
                                     });
  const auto mid = static_cast<std::size_t>(mid_it - rows.begin());
  const auto left = grow(tree, x, rows, begin, mid, depth + 1, max_depth, rng);
  const auto right = grow(tree, x, rows, mid, end, depth + 1, max_depth, rng);
  auto& node = tree.nodes[id];
  node.feature = feature;
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  return id;
}

}  // namespace detail

// T isolation trees on psi-row subsamples (without replacement, or with
// replacement when fewer than psi rows exist); depth is capped at
// ceil(log2 psi).
inline IForestModel fit_iforest(const Matrix& x, const IForestConfig& config, std::uint64_t seed) {
  if (x.rows() < 2) throw ShapeError("isolation forest needs at least 2 rows");
  const auto n = static_cast<std::size_t>(x.rows());
  IForestModel m;
  m.subsample = config.subsample;
  m.dim = static_cast<std::size_t>(x.cols());
  m.contamination = config.contamination;
  const auto max_depth = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(config.subsample))));
  Rng rng(seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t t = 0; t < config.trees; ++t) {
    std::vector<std::size_t> rows;
    if (n >= config.subsample) {
      for (std::size_t i = 0; i < config.subsample; ++i) std::swap(all[i], all[i + rng.index(n - i)]);
      rows.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(config.subsample));
    } else {
      for (std::size_t i = 0; i < config.subsample; ++i) rows.push_back(static_cast<std::size_t>(rng.index(n)));
    }
    IsolationTree tree;
    detail::grow(tree, x, rows, 0, rows.size(), 0, max_depth, rng);
    m.trees.push_back(std::move(tree));
  }
  auto scores = score_iforest(m, x);
  std::sort(scores.begin(), scores.end());
  const double pos = (1.0 - config.contamination) * static_cast<double>(scores.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, scores.size() - 1);
  m.threshold = scores[lo] + (pos - static_cast<double>(lo)) * (scores[hi] - scores[lo]);
  return m;
}

inline nlohmann::json to_json(const IForestModel& m) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : m.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
      if (n.feature < 0) {
        nodes.push_back(nlohmann::json::array({n.size}));
      } else {
        nodes.push_back(nlohmann::json::array({n.size, n.feature, n.threshold, n.left, n.right}));
      }
    }
    trees.push_back(std::move(nodes));
  }
  return {{"subsample", m.subsample},
          {"dim", m.dim},
          {"contamination", m.contamination},
          {"threshold", m.threshold},
          {"trees", std::move(trees)}};
}

inline IForestModel iforest_from_json(const nlohmann::json& j) {
  IForestModel m;
  m.subsample = j.at("subsample").get<std::size_t>();
  m.dim = j.at("dim").get<std::size_t>();
  m.contamination = j.at("contamination").get<double>();
  m.threshold = j.at("threshold").get<double>();
  for (const auto& tj : j.at("trees")) {
    IsolationTree t;
    for (const auto& nj : tj) {
      IsolationNode n;
      n.size = nj.at(0).get<std::uint32_t>();
      if (nj.size() == 5) {
        n.feature = nj.at(1).get<int>();
        n.threshold = nj.at(2).get<double>();
        n.left = nj.at(3).get<std::uint32_t>();
        n.right = nj.at(4).get<std::uint32_t>();
      } else if (nj.size() != 1) {
        throw FormatError("malformed isolation tree node");
      }
      t.nodes.push_back(n);
    }
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      const auto& n = t.nodes[i];
      if (n.feature >= 0 && (static_cast<std::size_t>(n.feature) >= m.dim || n.left <= i || n.right <= i ||
                             n.left >= t.nodes.size() || n.right >= t.nodes.size())) {
        throw FormatError("isolation tree node out of range");
      }
    }
    if (t.nodes.empty()) throw FormatError("empty isolation tree");
    m.trees.push_back(std::move(t));
  }
  if (m.trees.empty()) throw FormatError("isolation forest without trees");
  return m;
}

}  // namespace mcdsvdd::detectors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mcdsvdd/core/error.hpp"

namespace mcdsvdd::evaluation {

// Scores with binary outlier flags (1 = outlier), aligned by index.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

// Probability that a random outlier outscores a random inlier, ties counted
// as one half. Computed from average ranks (Mann-Whitney U) in O(n log n).
inline double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size()) {
    throw ShapeError("auroc: " + std::to_string(scores.size()) + " scores but " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (auto l : labels) {
    if (l > 1) throw MetricError("auroc: labels must be 0 or 1");
    positives += l;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("auroc is undefined unless both outliers and inliers are present");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw MetricError("auroc: NaN score");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the rank sum keeps tied (half-integer) ranks exact.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t tied_positives = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) tied_positives += labels[order[j++]];
    // Ranks i+1 .. j share the average (i + 1 + j) / 2.
    twice_rank_sum += tied_positives * (i + 1 + j);
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = static_cast<double>(twice_rank_sum) / 2.0 - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

inline double auroc(const ScoredSet& s) { return auroc(s.scores, s.labels); }

}  // namespace mcdsvdd::evaluation

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <list>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::detectors {

struct OcsvmModel {
  Matrix support;  // one support vector per row
  Vector alpha;    // dual coefficients of the support vectors, summing to 1
  double rho = 0.0;
  double gamma = 1.0;
  double nu = 0.01;
  double box = 1.0;  // upper bound 1 / (nu N)
  std::size_t iterations = 0;
  double gap = 0.0;  // final maximal KKT violation

  std::size_t dim() const { return static_cast<std::size_t>(support.cols()); }

  // rho - sum_i alpha_i K(s_i, x); positive outside the learned region.
  double score_row(const Eigen::RowVectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != dim()) {
      throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " + std::to_string(dim()));
    }
    const Vector k = (-gamma * (support.rowwise() - x).rowwise().squaredNorm().array()).exp().matrix();
    return rho - alpha.dot(k);
  }
};

inline std::vector<double> score_ocsvm(const OcsvmModel& m, const Matrix& x) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = m.score_row(x.row(i));
  return out;
}

// 1 / (d * mean per-feature variance); 1 when every feature is constant.
inline double auto_gamma(const Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double mean_var = (x.rowwise() - mean).array().square().colwise().mean().mean();
  if (!(mean_var > 0.0)) return 1.0;
  return 1.0 / (static_cast<double>(x.cols()) * mean_var);
}

namespace detail {

// Least-recently-used cache of RBF kernel rows.
class KernelRows {
 public:
  KernelRows(const Matrix& x, double gamma, std::size_t capacity)
      : x_(x), gamma_(gamma), capacity_(std::max<std::size_t>(2, capacity)) {}

  const Vector& row(std::size_t i) {
    if (auto it = index_.find(i); it != index_.end()) {
      order_.splice(order_.begin(), order_, it->second);
      return it->second->second;
    }
    if (order_.size() >= capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
    const auto r = static_cast<Eigen::Index>(i);
    Vector k = (-gamma_ * (x_.rowwise() - x_.row(r)).rowwise().squaredNorm().array()).exp().matrix();
    order_.emplace_front(i, std::move(k));
    index_[i] = order_.begin();
    return order_.front().second;
  }

 private:
  const Matrix& x_;
  double gamma_;
  std::size_t capacity_;
  std::list<std::pair<std::size_t, Vector>> order_;
  std::unordered_map<std::size_t, std::list<std::pair<std::size_t, Vector>>::iterator> index_;
};

}  // namespace detail

// Solves min 1/2 a'Ka s.t. 0 <= a_i <= 1/(nu N), sum a = 1 by pairwise
// (SMO) updates with second-order working-set selection, stopping once the
// maximal KKT violation falls below the tolerance.
inline OcsvmModel fit_ocsvm(const Matrix& x, const OcsvmConfig& config) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (n < 2) throw ShapeError("one-class svm needs at least 2 rows");
  OcsvmModel m;
  m.nu = config.nu;
  m.gamma = config.gamma ? *config.gamma : auto_gamma(x);
  const double nn_total = config.nu * static_cast<double>(n);
  const double c = 1.0 / nn_total;
  m.box = c;

  std::vector<double> alpha(n, 0.0);
  const auto full = std::min(n, static_cast<std::size_t>(std::floor(nn_total)));
  for (std::size_t i = 0; i < full; ++i) alpha[i] = c;
  if (full < n) alpha[full] = 1.0 - static_cast<double>(full) * c;

  const std::size_t row_bytes = n * sizeof(double);
  detail::KernelRows kernel(x, m.gamma, config.cache_megabytes * 1024 * 1024 / row_bytes);
  std::vector<double> grad(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    if (alpha[j] <= 0.0) continue;
    const Vector& k = kernel.row(j);
    for (std::size_t t = 0; t < n; ++t) grad[t] += alpha[j] * k(static_cast<Eigen::Index>(t));
  }

  constexpr double tau = 1e-12;
  const std::size_t cap = std::max<std::size_t>(10'000'000, 100 * n);
  const auto at_upper = [&](std::size_t t) { return alpha[t] >= c; };
  const auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
  double gap = std::numeric_limits<double>::infinity();
  std::size_t iter = 0;
  for (;; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (!at_upper(t) && -grad[t] >= gmax) {
        gmax = -grad[t];
        i = t;
      }
    }
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t j = n;
    double best = std::numeric_limits<double>::infinity();
    const Vector* qi = i < n ? &kernel.row(i) : nullptr;
    for (std::size_t t = 0; t < n; ++t) {
      if (at_lower(t)) continue;
      gmax2 = std::max(gmax2, grad[t]);
      const double b = gmax + grad[t];
      if (qi != nullptr && b > 0.0) {
        double a = 2.0 - 2.0 * (*qi)(static_cast<Eigen::Index>(t));
        if (a <= 0.0) a = tau;
        if (-(b * b) / a <= best) {
          best = -(b * b) / a;
          j = t;
        }
      }
    }
    gap = gmax + gmax2;
    if (gap < config.tolerance || i == n || j == n) break;
    if (iter >= cap) throw SolverError(gap, "one-class svm did not converge within " + std::to_string(cap) + " iterations");

    const Vector ki = *qi;  // copy: fetching row j may evict row i
    const Vector& kj = kernel.row(j);
    double quad = 2.0 - 2.0 * ki(static_cast<Eigen::Index>(j));
    if (quad <= 0.0) quad = tau;
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    const double delta = (grad[i] - grad[j]) / quad;
    const double sum = old_i + old_j;
    alpha[i] -= delta;
    alpha[j] += delta;
    if (sum > c) {
      if (alpha[i] > c) {
        alpha[i] = c;
        alpha[j] = sum - c;
      }
    } else if (alpha[j] < 0.0) {
      alpha[j] = 0.0;
      alpha[i] = sum;
    }
    if (sum > c) {
      if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = sum - c;
      }
    } else if (alpha[i] < 0.0) {
      alpha[i] = 0.0;
      alpha[j] = sum;
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += ki(static_cast<Eigen::Index>(t)) * di + kj(static_cast<Eigen::Index>(t)) * dj;
    }
  }
  m.iterations = iter;
  m.gap = gap;

  // Offset from free support vectors, or the midpoint of the feasible range.
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (at_upper(t)) {
      lb = std::max(lb, grad[t]);
    } else if (at_lower(t)) {
      ub = std::min(ub, grad[t]);
    } else {
      free_sum += grad[t];
      ++free_count;
    }
  }
  m.rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (ub + lb);

  std::vector<std::size_t> sv;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) sv.push_back(t);
  }
  m.support.resize(static_cast<Eigen::Index>(sv.size()), x.cols());
  m.alpha.resize(static_cast<Eigen::Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    m.support.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(sv[k]));
    m.alpha(static_cast<Eigen::Index>(k)) = alpha[sv[k]];
  }
  return m;
}

inline nlohmann::json to_json(const OcsvmModel& m) {
  std::vector<double> flat(m.support.data(), m.support.data() + m.support.size());  // column-major
  return {{"rows", m.support.rows()},
          {"cols", m.support.cols()},
          {"support", std::move(flat)},
          {"alpha", std::vector<double>(m.alpha.data(), m.alpha.data() + m.alpha.size())},
          {"rho", m.rho},
          {"gamma", m.gamma},
          {"nu", m.nu},
          {"box", m.box},
          {"iterations", m.iterations},
          {"gap", m.gap}};
}

inline OcsvmModel ocsvm_from_json(const nlohmann::json& j) {
  OcsvmModel m;
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("support").get<std::vector<double>>();
  const auto alpha = j.at("alpha").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols || static_cast<Eigen::Index>(alpha.size()) != rows) {
    throw FormatError("support vector block has the wrong size");
  }
  m.support = Eigen::Map<const Matrix>(flat.data(), rows, cols);
  m.alpha = Eigen::Map<const Vector>(alpha.data(), rows);
  m.rho = j.at("rho").get<double>();
  m.gamma = j.at("gamma").get<double>();
  m.nu = j.at("nu").get<double>();
  m.box = j.at("box").get<double>();
  m.iterations = j.at("iterations").get<std::size_t>();
  m.gap = j.at("gap").get<double>();
  return m;
}

}  // namespace mcdsvdd::detectors

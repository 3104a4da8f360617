#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mcdsvdd/nn/network.hpp"

namespace mcdsvdd::nn {

// A scalar loss of the network's parameters on a fixed batch, returning the
// value together with its analytic gradient.
using DifferentiableLoss = std::function<std::pair<double, GradientSet>(const DenseNetwork&, const Matrix&)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t entries_checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Relative error is |a - n| / max(|a|, |n|, floor * max(1, |loss|)).
  // Difference round-off grows with the loss value, so the floor does too.
  double floor = 1e-4;
};

// Compares `analytic` (aligned with `params`) against a fourth-order central
// difference of `loss`, which must read the parameters through the views.
inline GradCheckReport grad_check(std::vector<ParamRef> params, const std::vector<Matrix>& analytic,
                                  const std::function<double()>& loss, double tolerance,
                                  const GradCheckOptions& opts = {}) {
  if (analytic.size() != params.size()) throw ShapeError("analytic gradient does not match parameter list");
  GradCheckReport report;
  const double floor = opts.floor * std::max(1.0, std::abs(loss()));
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& value = params[t].value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double original = value.data()[i];
      const double h = opts.step * std::max(1.0, std::abs(original));
      const auto at = [&](double offset) {
        value.data()[i] = original + offset;
        return loss();
      };
      const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      value.data()[i] = original;
      const double a = analytic[t].data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      if (!(rel <= report.max_relative_error)) {
        report.max_relative_error = rel;
        report.worst_tensor = params[t].name();
      }
      ++report.entries_checked;
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

inline GradCheckReport grad_check(const DenseNetwork& net, const GradientSet& analytic,
                                  const std::function<double(const DenseNetwork&)>& loss, double tolerance,
                                  const GradCheckOptions& opts = {}) {
  DenseNetwork probe = net;
  return grad_check(
      parameters(probe), analytic.tensors, [&] { return loss(probe); }, tolerance, opts);
}

inline GradCheckReport grad_check(const DenseNetwork& net, const DifferentiableLoss& loss, const Matrix& batch,
                                  double tolerance, const GradCheckOptions& opts = {}) {
  const auto [value, analytic] = loss(net, batch);
  (void)value;
  return grad_check(
      net, analytic, [&](const DenseNetwork& n) { return loss(n, batch).first; }, tolerance, opts);
}

}  // namespace mcdsvdd::nn

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "mcdsvdd/core/error.hpp"

namespace mcdsvdd::evaluation {

struct SampleSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n - 1) standard deviation
  std::size_t count = 0;
};

inline SampleSummary summarize(const std::vector<double>& values) {
  SampleSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

enum class TTest { welch, student };

inline std::string to_string(TTest t) { return t == TTest::welch ? "welch" : "student"; }

inline TTest ttest_from_string(const std::string& s) {
  if (s == "welch") return TTest::welch;
  if (s == "student") return TTest::student;
  throw ConfigError("unknown t-test '" + s + "' (expected welch or student)");
}

// Two-sided two-sample t-test from summary statistics. Welch uses unpooled
// variances with Satterthwaite degrees of freedom; Student pools them.
// When the standard error is zero the result is 1 for equal means and 0
// otherwise.
inline double t_test_p_value(const SampleSummary& a, const SampleSummary& b, TTest kind = TTest::welch) {
  if (a.count < 2 || b.count < 2) throw MetricError("t-test needs at least 2 values per sample");
  const double na = static_cast<double>(a.count);
  const double nb = static_cast<double>(b.count);
  const double va = a.stddev * a.stddev;
  const double vb = b.stddev * b.stddev;
  double se2 = 0.0;
  double df = 0.0;
  if (kind == TTest::welch) {
    const double qa = va / na;
    const double qb = vb / nb;
    se2 = qa + qb;
    df = se2 > 0.0 ? se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0)) : 0.0;
  } else {
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    se2 = pooled * (1.0 / na + 1.0 / nb);
    df = na + nb - 2.0;
  }
  const double diff = a.mean - b.mean;
  if (!(se2 > 0.0)) return diff == 0.0 ? 1.0 : 0.0;
  const double t = std::abs(diff) / std::sqrt(se2);
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
}

inline double t_test_p_value(const std::vector<double>& a, const std::vector<double>& b, TTest kind = TTest::welch) {
  return t_test_p_value(summarize(a), summarize(b), kind);
}

}  // namespace mcdsvdd::evaluation

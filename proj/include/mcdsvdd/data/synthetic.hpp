#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/core/rng.hpp"
#include "mcdsvdd/data/dataset.hpp"

namespace mcdsvdd::data {

struct ClusterSpec {
  std::string top_class;
  std::string subclass;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;
};

// Gaussian-mixture description of a labeled synthetic dataset.
//
// JSON form:
//   {"clusters": [{"top_class": "t", "subclass": "A", "count": 200,
//                  "mean": [0, 0], "std": 1.0 | [1, 2] | "covariance": [[..]]}]}
struct SyntheticSpec {
  std::vector<ClusterSpec> clusters;

  std::size_t dim() const { return clusters.empty() ? 0 : static_cast<std::size_t>(clusters.front().mean.size()); }

  Taxonomy taxonomy() const {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& c : clusters) pairs.emplace_back(c.top_class, c.subclass);
    return Taxonomy::infer(pairs);
  }

  void validate() const {
    if (clusters.size() < 2) throw SpecError("clusters: at least 2 clusters are required");
    const auto d = clusters.front().mean.size();
    if (d == 0) throw SpecError("clusters[0].mean: must be non-empty");
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      const auto& c = clusters[i];
      const std::string path = "clusters[" + std::to_string(i) + "]";
      if (c.count == 0) throw SpecError(path + ".count: must be positive");
      if (c.mean.size() != d) throw SpecError(path + ".mean: dimension mismatch");
      if (c.covariance.rows() != d || c.covariance.cols() != d) {
        throw SpecError(path + ".covariance: must be " + std::to_string(d) + "x" + std::to_string(d));
      }
      if (!c.covariance.isApprox(c.covariance.transpose())) {
        throw SpecError(path + ".covariance: not symmetric");
      }
      Eigen::LLT<Eigen::MatrixXd> llt(c.covariance);
      if (llt.info() != Eigen::Success) throw SpecError(path + ".covariance: not positive definite");
      if (c.subclass.empty() || c.top_class.empty()) throw SpecError(path + ": missing labels");
    }
    try {
      (void)taxonomy();
    } catch (const TaxonomyError& e) {
      throw SpecError(std::string("clusters: ") + e.what());
    }
  }

  static SyntheticSpec from_json(const nlohmann::json& j) {
    SyntheticSpec spec;
    if (!j.contains("clusters") || !j.at("clusters").is_array()) throw SpecError("clusters: missing array");
    const auto& arr = j.at("clusters");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto& cj = arr[i];
      const std::string path = "clusters[" + std::to_string(i) + "]";
      ClusterSpec c;
      try {
        c.top_class = cj.at("top_class").get<std::string>();
        c.subclass = cj.at("subclass").get<std::string>();
        const auto count = cj.at("count").get<long long>();
        if (count <= 0) throw SpecError(path + ".count: must be positive");
        c.count = static_cast<std::size_t>(count);
        const auto mean = cj.at("mean").get<std::vector<double>>();
        c.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        const auto d = c.mean.size();
        if (cj.contains("covariance")) {
          const auto rows = cj.at("covariance").get<std::vector<std::vector<double>>>();
          c.covariance.resize(static_cast<Eigen::Index>(rows.size()),
                              rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
          for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != static_cast<std::size_t>(c.covariance.cols())) {
              throw SpecError(path + ".covariance: ragged matrix");
            }
            for (std::size_t s = 0; s < rows[r].size(); ++s) {
              c.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s)) = rows[r][s];
            }
          }
        } else if (cj.contains("std") && cj.at("std").is_array()) {
          const auto sd = cj.at("std").get<std::vector<double>>();
          if (sd.size() != static_cast<std::size_t>(d)) throw SpecError(path + ".std: dimension mismatch");
          c.covariance = Eigen::MatrixXd::Zero(d, d);
          for (Eigen::Index k = 0; k < d; ++k) c.covariance(k, k) = sd[static_cast<std::size_t>(k)] * sd[static_cast<std::size_t>(k)];
        } else {
          const double sd = cj.value("std", 1.0);
          c.covariance = Eigen::MatrixXd::Identity(d, d) * (sd * sd);
        }
      } catch (const nlohmann::json::exception& e) {
        throw SpecError(path + ": " + e.what());
      }
      spec.clusters.push_back(std::move(c));
    }
    spec.validate();
    return spec;
  }
};

// Draws every cluster's samples as mean + L z with L the Cholesky factor of
// the covariance. Ids are "syn_<zero-padded index>" in generation order.
inline Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto d = static_cast<Eigen::Index>(spec.dim());
  Dataset out(spec.taxonomy(), spec.dim());
  Rng rng(seed);
  std::size_t next_id = 0;
  Eigen::VectorXd z(d);
  for (const auto& c : spec.clusters) {
    const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(c.covariance).matrixL();
    for (std::size_t n = 0; n < c.count; ++n) {
      for (Eigen::Index k = 0; k < d; ++k) z(k) = rng.normal();
      const Eigen::VectorXd x = c.mean + l * z;
      char id[32];
      std::snprintf(id, sizeof id, "syn_%07zu", next_id++);
      out.add({id, c.top_class, c.subclass, std::vector<double>(x.data(), x.data() + d)});
    }
  }
  return out;
}

}  // namespace mcdsvdd::data

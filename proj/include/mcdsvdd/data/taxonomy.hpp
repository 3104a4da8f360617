#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcdsvdd/core/error.hpp"

namespace mcdsvdd::data {

// Two-level class hierarchy: ordered top classes, each with an ordered list of
// subclasses. Subclass names are unique across the whole taxonomy.
class Taxonomy {
 public:
  using Group = std::pair<std::string, std::vector<std::string>>;

  Taxonomy() = default;

  explicit Taxonomy(std::vector<Group> groups) : groups_(std::move(groups)) {
    std::set<std::string> tops;
    std::set<std::string> subs;
    for (const auto& [top, subclasses] : groups_) {
      if (top.empty()) throw TaxonomyError("empty top-class name");
      if (!tops.insert(top).second) {
        throw TaxonomyError("duplicate top class '" + top + "'");
      }
      for (const auto& sub : subclasses) {
        if (sub.empty()) throw TaxonomyError("empty subclass name under '" + top + "'");
        if (!subs.insert(sub).second) {
          throw TaxonomyError("subclass '" + sub + "' appears under more than one top class");
        }
      }
    }
  }

  // The light-curve taxonomy: 3 top classes, 14 subclasses.
  static Taxonomy ztf() {
    return Taxonomy({
        {"transient", {"SLSN", "SNII", "SNIa", "SNIbc"}},
        {"stochastic", {"AGN", "Blazar", "CV/Nova", "QSO", "YSO"}},
        {"periodic", {"CEP", "DSCT", "E", "RRL", "LPV"}},
    });
  }

  // Builds a taxonomy from observed (top, subclass) pairs in order of first
  // appearance. A subclass observed under two top classes is an error.
  static Taxonomy infer(const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<Group> groups;
    for (const auto& [top, sub] : pairs) {
      auto it = std::find_if(groups.begin(), groups.end(),
                             [&](const Group& g) { return g.first == top; });
      if (it == groups.end()) {
        groups.push_back({top, {}});
        it = std::prev(groups.end());
      }
      if (std::find(it->second.begin(), it->second.end(), sub) == it->second.end()) {
        it->second.push_back(sub);
      }
    }
    return Taxonomy(std::move(groups));
  }

  const std::vector<Group>& groups() const noexcept { return groups_; }

  std::vector<std::string> top_classes() const {
    std::vector<std::string> out;
    for (const auto& g : groups_) out.push_back(g.first);
    return out;
  }

  const std::vector<std::string>& subclasses(std::string_view top) const {
    for (const auto& g : groups_) {
      if (g.first == top) return g.second;
    }
    throw TaxonomyError("unknown top class '" + std::string(top) + "'");
  }

  std::optional<std::string> top_class_of(std::string_view subclass) const {
    for (const auto& [top, subs] : groups_) {
      if (std::find(subs.begin(), subs.end(), subclass) != subs.end()) return top;
    }
    return std::nullopt;
  }

  bool has_top_class(std::string_view top) const {
    return std::any_of(groups_.begin(), groups_.end(),
                       [&](const Group& g) { return g.first == top; });
  }

  bool contains(std::string_view top, std::string_view subclass) const {
    auto owner = top_class_of(subclass);
    return owner && *owner == top;
  }

  void require(std::string_view top, std::string_view subclass) const {
    if (contains(top, subclass)) return;
    auto owner = top_class_of(subclass);
    if (!owner) {
      throw TaxonomyError("unknown subclass '" + std::string(subclass) + "'");
    }
    throw TaxonomyError("subclass '" + std::string(subclass) + "' belongs to '" + *owner +
                        "', not '" + std::string(top) + "'");
  }

  std::size_t subclass_count() const noexcept {
    std::size_t n = 0;
    for (const auto& g : groups_) n += g.second.size();
    return n;
  }

  bool operator==(const Taxonomy&) const = default;

 private:
  std::vector<Group> groups_;
};

inline void to_json(nlohmann::json& j, const Taxonomy& t) {
  j = nlohmann::json::array();
  for (const auto& [top, subs] : t.groups()) {
    j.push_back({{"top_class", top}, {"subclasses", subs}});
  }
}

inline void from_json(const nlohmann::json& j, Taxonomy& t) {
  std::vector<Taxonomy::Group> groups;
  for (const auto& g : j) {
    groups.emplace_back(g.at("top_class").get<std::string>(),
                        g.at("subclasses").get<std::vector<std::string>>());
  }
  t = Taxonomy(std::move(groups));
}

}  // namespace mcdsvdd::data

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/data/taxonomy.hpp"

namespace mcdsvdd::data {

struct Sample {
  std::string id;
  std::string top_class;
  std::string subclass;
  std::vector<double> features;
};

// Ordered, labeled collection of fixed-width feature vectors.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Taxonomy taxonomy, std::size_t dim) : taxonomy_(std::move(taxonomy)), dim_(dim) {}

  void add(Sample sample) {
    if (sample.features.size() != dim_) {
      throw ShapeError("sample '" + sample.id + "' has " +
                       std::to_string(sample.features.size()) + " features, expected " +
                       std::to_string(dim_));
    }
    taxonomy_.require(sample.top_class, sample.subclass);
    samples_.push_back(std::move(sample));
  }

  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const Taxonomy& taxonomy() const noexcept { return taxonomy_; }

  // Same taxonomy and dim, no samples.
  Dataset empty_like() const { return Dataset(taxonomy_, dim_); }

  Dataset filter(const std::function<bool(const Sample&)>& keep) const {
    Dataset out = empty_like();
    for (const auto& s : samples_) {
      if (keep(s)) out.samples_.push_back(s);
    }
    return out;
  }

  // Rows in order of `indices`.
  Dataset select(const std::vector<std::size_t>& indices) const {
    Dataset out = empty_like();
    out.samples_.reserve(indices.size());
    for (auto i : indices) out.samples_.push_back(samples_.at(i));
    return out;
  }

  // Row indices sorted by sample id (ties keep input order).
  std::vector<std::size_t> order_by_id() const {
    std::vector<std::size_t> idx(samples_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return samples_[a].id < samples_[b].id;
    });
    return idx;
  }

  Dataset sorted_by_id() const { return select(order_by_id()); }

  Eigen::MatrixXd features() const {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(samples_.size()), static_cast<Eigen::Index>(dim_));
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      for (std::size_t j = 0; j < dim_; ++j) {
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples_[i].features[j];
      }
    }
    return x;
  }

  std::map<std::string, std::size_t> subclass_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& s : samples_) ++counts[s.subclass];
    return counts;
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.id);
    return out;
  }

  // Concatenation; both operands must share taxonomy and dim.
  Dataset merged(const Dataset& other) const {
    if (other.dim_ != dim_) throw ShapeError("cannot merge datasets of different dim");
    Dataset out = *this;
    out.samples_.insert(out.samples_.end(), other.samples_.begin(), other.samples_.end());
    return out;
  }

 private:
  Taxonomy taxonomy_;
  std::size_t dim_ = 0;
  std::vector<Sample> samples_;
};

// Median of a non-empty list (mean of the two middle values for even sizes).
inline double median(std::vector<double> values) {
  if (values.empty()) throw IngestionError("median of empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

struct ParseOptions {
  char delimiter = ',';
  // nullopt: build the taxonomy from the (top_class, subclass) pairs in the file.
  std::optional<Taxonomy> taxonomy = Taxonomy::ztf();
  // Per-feature fill values for missing cells. When absent the file's own
  // column medians are used (the file is treated as the training set).
  std::optional<std::vector<double>> fill_values;
  // Required when the input may be completely empty.
  std::optional<std::size_t> expected_dim;
};

struct ParseReport {
  Dataset dataset;
  std::vector<std::string> feature_names;
  std::vector<double> fill_values;          // value used (or that would be used) per feature
  std::vector<std::size_t> imputed_per_feature;
  std::size_t imputed_cells = 0;
};

namespace detail {

inline std::vector<std::string> split_line(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA" || cell == "null";
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Reads `id,top_class,subclass,<d feature columns>` delimited text. Empty
// cells are missing values; they are replaced per `ParseOptions::fill_values`
// or by the column median. Lines starting with '#' are comments.
inline ParseReport parse_dataset(std::istream& in, const ParseOptions& options = {}) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    header = detail::split_line(t, options.delimiter);
    break;
  }

  ParseReport report;
  if (header.empty()) {
    if (!options.expected_dim) throw ParseError(line_no, "missing header row");
    report.dataset = Dataset(options.taxonomy.value_or(Taxonomy{}), *options.expected_dim);
    report.fill_values = options.fill_values.value_or(std::vector<double>(*options.expected_dim, 0.0));
    report.imputed_per_feature.assign(*options.expected_dim, 0);
    return report;
  }
  if (header.size() < 4 || detail::trim(header[0]) != "id" || detail::trim(header[1]) != "top_class" ||
      detail::trim(header[2]) != "subclass") {
    throw ParseError(line_no, "header must start with id,top_class,subclass followed by feature columns");
  }
  const std::size_t dim = header.size() - 3;
  if (options.expected_dim && *options.expected_dim != dim) {
    throw ShapeError("file has " + std::to_string(dim) + " feature columns, expected " +
                     std::to_string(*options.expected_dim));
  }
  if (options.fill_values && options.fill_values->size() != dim) {
    throw ShapeError("fill values have wrong dimensionality");
  }
  for (std::size_t j = 3; j < header.size(); ++j) {
    report.feature_names.emplace_back(detail::trim(header[j]));
  }

  std::vector<Sample> rows;
  std::vector<std::vector<double>> observed(dim);
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto cells = detail::split_line(t, options.delimiter);
    if (cells.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                    std::to_string(cells.size()));
    }
    Sample s;
    s.id = std::string(detail::trim(cells[0]));
    s.top_class = std::string(detail::trim(cells[1]));
    s.subclass = std::string(detail::trim(cells[2]));
    if (s.id.empty()) throw ParseError(line_no, "empty id");
    if (!seen_ids.insert(s.id).second) throw ParseError(line_no, "duplicate id '" + s.id + "'");
    s.features.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
      auto cell = detail::trim(cells[j + 3]);
      if (detail::is_missing(cell)) {
        s.features[j] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      std::string text(cell);
      char* end = nullptr;
      const double v = std::strtod(text.c_str(), &end);
      if (end != text.c_str() + text.size() || !std::isfinite(v)) {
        throw ParseError(line_no, "bad numeric cell '" + text + "' in column '" +
                                      report.feature_names[j] + "'");
      }
      s.features[j] = v;
      observed[j].push_back(v);
    }
    rows.push_back(std::move(s));
  }

  if (options.fill_values) {
    report.fill_values = *options.fill_values;
  } else {
    report.fill_values.resize(dim, 0.0);
    for (std::size_t j = 0; j < dim; ++j) {
      if (observed[j].empty()) {
        if (rows.empty()) continue;
        throw IngestionError("feature column '" + report.feature_names[j] + "' is entirely missing");
      }
      report.fill_values[j] = median(observed[j]);
    }
  }

  report.imputed_per_feature.assign(dim, 0);
  for (auto& s : rows) {
    for (std::size_t j = 0; j < dim; ++j) {
      if (std::isnan(s.features[j])) {
        s.features[j] = report.fill_values[j];
        ++report.imputed_per_feature[j];
        ++report.imputed_cells;
      }
    }
  }

  Taxonomy taxonomy;
  if (options.taxonomy) {
    taxonomy = *options.taxonomy;
  } else {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& s : rows) pairs.emplace_back(s.top_class, s.subclass);
    taxonomy = Taxonomy::infer(pairs);
  }
  report.dataset = Dataset(std::move(taxonomy), dim);
  for (auto& s : rows) report.dataset.add(std::move(s));
  return report;
}

inline ParseReport parse_dataset(const std::filesystem::path& path, const ParseOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open dataset '" + path.string() + "'");
  return parse_dataset(in, options);
}

// Writes the standard header `id,top_class,subclass,f_000,...` and one row per
// sample with round-trippable numbers.
inline void write_dataset(std::ostream& out, const Dataset& data) {
  out << "id,top_class,subclass";
  for (std::size_t j = 0; j < data.dim(); ++j) {
    char name[16];
    std::snprintf(name, sizeof name, ",f_%03zu", j);
    out << name;
  }
  out << '\n';
  for (const auto& s : data.samples()) {
    out << s.id << ',' << s.top_class << ',' << s.subclass;
    for (double v : s.features) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

}  // namespace mcdsvdd::data

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mcdsvdd/core/error.hpp"
#include "mcdsvdd/detectors/config.hpp"
#include "mcdsvdd/evaluation/protocol.hpp"

namespace mcdsvdd::evaluation {

// Identifies the run that produced a report.
struct RunStamp {
  std::uint64_t master_seed = 0;
  std::string config_digest;
};

namespace detail {

// Shortest text that reads back to the same double.
inline std::string exact(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Quotes a CSV field when it contains a delimiter, quote or newline.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += (c == '\n' || c == '\r') ? ' ' : c;
  }
  return out + "\"";
}

inline std::string join_warnings(const std::vector<std::string>& w) {
  std::string out;
  for (const auto& s : w) out += (out.empty() ? "" : "; ") + s;
  return out;
}

inline std::string detector_label(const std::string& name) {
  try {
    return detectors::display_name(detectors::detector_kind_from_string(name));
  } catch (const ConfigError&) {
    return name;
  }
}

}  // namespace detail

// One row per (detector, top class, subclass, fold).
inline void write_results_csv(std::ostream& out, const BenchmarkResult& r, const RunStamp& stamp) {
  out << "detector,top_class,outlier_subclass,fold,fold_seed,auroc,train_rows,validation_rows,ts2_rows,ts2_outliers,"
         "status,message,master_seed,config_digest\n";
  for (const auto& c : r.cells) {
    for (const auto& f : c.folds) {
      const std::string message = f.ok() ? detail::join_warnings(f.warnings) : f.error;
      out << c.detector << ',' << detail::csv_field(c.top_class) << ',' << detail::csv_field(c.outlier_subclass) << ','
          << f.fold << ',' << f.seed << ',' << detail::exact(f.auroc) << ',' << f.train_rows << ','
          << f.validation_rows << ',' << f.ts2_rows << ',' << f.ts2_outliers << ',' << (f.ok() ? "ok" : "failed")
          << ',' << detail::csv_field(message) << ',' << stamp.master_seed << ',' << stamp.config_digest << '\n';
    }
  }
}

// One row per (detector, top class, subclass) with mean, std and best flag.
inline void write_summary_csv(std::ostream& out, const BenchmarkResult& r, const RunStamp& stamp) {
  out << "detector,top_class,outlier_subclass,folds,mean_auroc,std_auroc,best,status,master_seed,config_digest\n";
  for (const auto& c : r.cells) {
    out << c.detector << ',' << detail::csv_field(c.top_class) << ',' << detail::csv_field(c.outlier_subclass) << ','
        << c.folds.size() << ',' << detail::exact(c.mean) << ',' << detail::exact(c.stddev) << ','
        << (c.best ? 1 : 0) << ',' << (c.ok() ? "ok" : "failed") << ',' << stamp.master_seed << ','
        << stamp.config_digest << '\n';
  }
}

// Detectors as rows, subclasses grouped by top class as columns, cells as
// "mean+-std"; the best cell of each column carries a trailing '*'.
inline std::string render_table(const std::vector<EvalResult>& cells, const RunStamp& stamp) {
  std::vector<std::string> rows;
  std::vector<std::pair<std::string, std::string>> cols;
  std::map<std::pair<std::string, std::pair<std::string, std::string>>, const EvalResult*> at;
  for (const auto& c : cells) {
    if (std::find(rows.begin(), rows.end(), c.detector) == rows.end()) rows.push_back(c.detector);
    const auto col = std::make_pair(c.top_class, c.outlier_subclass);
    if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
    at[{c.detector, col}] = &c;
  }
  const auto cell_text = [&](const std::string& det, const std::pair<std::string, std::string>& col) -> std::string {
    const auto it = at.find({det, col});
    if (it == at.end()) return "-";
    const auto& c = *it->second;
    if (!c.ok()) return "failed";
    return detail::fixed3(c.mean) + "+-" + detail::fixed3(c.stddev) + (c.best ? "*" : "");
  };

  std::size_t label_w = 6;
  for (const auto& r : rows) label_w = std::max(label_w, detail::detector_label(r).size());
  std::vector<std::size_t> width(cols.size(), 12);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    width[j] = std::max(width[j], cols[j].second.size());
    for (const auto& r : rows) width[j] = std::max(width[j], cell_text(r, cols[j]).size());
  }
  const auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };

  std::ostringstream out;
  out << "# AUROC mean+-std over folds; '*' marks the best detector per subclass\n";
  out << "# master_seed=" << stamp.master_seed << " config_digest=" << stamp.config_digest << "\n";
  std::string group_line = pad("", label_w);
  std::string header = pad("Method", label_w);
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const bool first_in_group = j == 0 || cols[j - 1].first != cols[j].first;
    const std::string sep = first_in_group ? " | " : "  ";
    group_line += sep + pad(first_in_group ? cols[j].first : "", width[j]);
    header += sep + pad(cols[j].second, width[j]);
  }
  out << group_line << "\n" << header << "\n" << std::string(header.size(), '-') << "\n";
  for (const auto& r : rows) {
    std::string line = pad(detail::detector_label(r), label_w);
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const bool first_in_group = j == 0 || cols[j - 1].first != cols[j].first;
      line += (first_in_group ? " | " : "  ") + pad(cell_text(r, cols[j]), width[j]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << "\n";
  }
  return out.str();
}

struct ReportPaths {
  std::filesystem::path results;
  std::filesystem::path summary;
  std::filesystem::path table;
};

inline ReportPaths write_report(const std::filesystem::path& dir, const BenchmarkResult& r, const RunStamp& stamp) {
  std::filesystem::create_directories(dir);
  ReportPaths p{dir / "results.csv", dir / "summary.csv", dir / "table.txt"};
  const auto open = [](const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot write '" + path.string() + "'");
    return f;
  };
  auto results = open(p.results);
  write_results_csv(results, r, stamp);
  auto summary = open(p.summary);
  write_summary_csv(summary, r, stamp);
  auto table = open(p.table);
  table << render_table(r.cells, stamp);
  return p;
}

}  // namespace mcdsvdd::evaluation

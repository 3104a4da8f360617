#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcdsvdd {

// Root of every exception thrown by the library. `kind()` is a stable tag
// used by the CLI's structured error log.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define MCDSVDD_DEFINE_ERROR(Name, tag)                                        \
  class Name : public Error {                                                  \
   public:                                                                     \
    explicit Name(const std::string& message) : Error(tag, message) {}         \
  };

MCDSVDD_DEFINE_ERROR(TaxonomyError, "taxonomy")
MCDSVDD_DEFINE_ERROR(IngestionError, "ingestion")
MCDSVDD_DEFINE_ERROR(ShapeError, "shape")
MCDSVDD_DEFINE_ERROR(StratificationError, "stratification")
MCDSVDD_DEFINE_ERROR(ScenarioError, "scenario")
MCDSVDD_DEFINE_ERROR(SpecError, "spec")
MCDSVDD_DEFINE_ERROR(BatchSizeError, "batch_size")
MCDSVDD_DEFINE_ERROR(CacheError, "cache")
MCDSVDD_DEFINE_ERROR(NumericError, "numeric")
MCDSVDD_DEFINE_ERROR(CenterError, "center")
MCDSVDD_DEFINE_ERROR(MetricError, "metric")
MCDSVDD_DEFINE_ERROR(ChecksumError, "checksum")
MCDSVDD_DEFINE_ERROR(ConfigError, "config")
MCDSVDD_DEFINE_ERROR(FormatError, "format")

#undef MCDSVDD_DEFINE_ERROR

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error("parse", "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Loss became non-finite during training.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t last_finite_epoch, const std::string& message)
      : Error("training", message + " (last finite epoch: " +
                              std::to_string(last_finite_epoch) + ")"),
        last_finite_epoch_(last_finite_epoch) {}

  std::size_t last_finite_epoch() const noexcept { return last_finite_epoch_; }

 private:
  std::size_t last_finite_epoch_;
};

class SolverError : public Error {
 public:
  SolverError(double duality_gap, const std::string& message)
      : Error("solver", message + " (gap " + std::to_string(duality_gap) + ")"),
        gap_(duality_gap) {}

  double duality_gap() const noexcept { return gap_; }

 private:
  double gap_;
};

}  // namespace mcdsvdd

#pragma once

#include <stdexcept>
#include <string>

namespace fedspectre {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor/vector dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Model architecture cannot be built (e.g. zero input width).
class ArchitectureError : public Error {
 public:
  using Error::Error;
};

// Batch unusable for the requested mode (train-mode batch of one row).
class BatchError : public Error {
 public:
  using Error::Error;
};

// Classification label outside {0, 1}.
class LabelError : public Error {
 public:
  using Error::Error;
};

// Backward called with a cache that cannot produce gradients.
class CacheError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (CSV row, header, ...). Messages name the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid generator / sweep specification.
class SpecError : public Error {
 public:
  using Error::Error;
};

// Requested split quota cannot be satisfied by the available records.
class QuotaError : public Error {
 public:
  using Error::Error;
};

// Malformed coordinator/participant exchange (empty or ragged collections).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Too few participants for the requested aggregation rule.
class ParticipantError : public Error {
 public:
  using Error::Error;
};

// Threshold computation impossible (e.g. empty validation set).
class ThresholdError : public Error {
 public:
  using Error::Error;
};

// Operation applied in a mode that does not support it.
class ContextError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given counts.
class MetricError : public Error {
 public:
  using Error::Error;
};

// Invalid federation/scenario configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure while reading or writing run outputs.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedspectre

#pragma once

#include <stdexcept>
#include <string>

namespace pmesh {

// Error classes map one-to-one onto CLI exit codes (see pipeline.hpp).

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad configuration values or unknown names.
struct ConfigError : Error {
  using Error::Error;
};

/// Malformed on-disk data: parse failures, truncated shards, bad headers.
struct FormatError : Error {
  using Error::Error;
};

/// A loaded or constructed object violates a structural invariant.
/// `field()` names the offending member.
class InvariantError : public Error {
 public:
  InvariantError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Operand shapes do not agree.
struct DimensionError : Error {
  using Error::Error;
};

/// NaN/Inf encountered during a numeric procedure.
struct NumericError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace pmesh

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segilm {

enum class ErrorCategory {
  io,
  format,
  version,
  checksum,
  dimension,
  divergence,
  invalid_argument,
};

std::string_view to_string(ErrorCategory category);

/// Process exit code used by the CLI for each category (0 is success).
int exit_code(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  [[nodiscard]] ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorCategory::format, what) {}
};

class VersionError : public Error {
 public:
  explicit VersionError(const std::string& what) : Error(ErrorCategory::version, what) {}
};

class ChecksumError : public Error {
 public:
  explicit ChecksumError(const std::string& what) : Error(ErrorCategory::checksum, what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCategory::dimension, what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what) : Error(ErrorCategory::divergence, what) {}
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error(ErrorCategory::invalid_argument, what) {}
};

}  // namespace segilm

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jdd {

// Process exit codes used by the CLI. Each exception type maps to exactly one.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kConfig = 3,
  kIo = 4,
  kFormat = 5,
  kConfigMismatch = 6,
  kTruncated = 7,
  kContract = 8,
  kNumeric = 9,
  kInternal = 10,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& kind, const std::string& what)
      : std::runtime_error(what), code_(code), kind_(kind) {}

  ExitCode code() const { return code_; }
  const std::string& kind() const { return kind_; }

 private:
  ExitCode code_;
  std::string kind_;
};

// Invalid configuration value. `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : Error(ExitCode::kConfig, "config", field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ExitCode::kContract, "shape", what) {}
};

class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what) : Error(ExitCode::kContract, "index", what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ExitCode::kContract, "domain", what) {}
};

class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& what)
      : Error(ExitCode::kContract, "contract", what) {}
};

class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what)
      : Error(ExitCode::kContract, "capacity", what) {}
};

class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(ExitCode::kIo, "io", path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error(ExitCode::kFormat, "format", "at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

class ConfigMismatchError : public Error {
 public:
  explicit ConfigMismatchError(const std::string& what)
      : Error(ExitCode::kConfigMismatch, "config_mismatch", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, "numeric", what) {}
};

}  // namespace jdd

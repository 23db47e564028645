#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cmrlab {

// Process exit codes double as error categories so the CLI can map any
// library exception to its scripting contract without a lookup table.
enum class ErrorCode : int {
  io = 1,
  config = 2,
  numeric = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCode::io, what) {}
};

// Malformed image file. `offset` is the byte position where parsing failed.
class DecodeError : public Error {
 public:
  DecodeError(const std::string& what, std::size_t offset)
      : Error(ErrorCode::io, what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class UnsupportedFormatError : public Error {
 public:
  explicit UnsupportedFormatError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class RangeError : public Error {
 public:
  RangeError(const std::string& what, std::size_t row, std::size_t col)
      : Error(ErrorCode::config, what + " at (row " + std::to_string(row) + ", col " +
                                     std::to_string(col) + ")"),
        row_(row),
        col_(col) {}
  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

class ScheduleError : public Error {
 public:
  explicit ScheduleError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class KernelError : public Error {
 public:
  explicit KernelError(const std::string& what) : Error(ErrorCode::config, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

// Edge map without foreground: the connectivity ratios are undefined.
class NoEdgesError : public Error {
 public:
  explicit NoEdgesError(const std::string& what) : Error(ErrorCode::numeric, what) {}
};

}  // namespace cmrlab

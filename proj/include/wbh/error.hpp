#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wbh {

/// Base class for every error the harness raises on purpose.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document. Carries the byte offset where parsing stopped.
class ParseError : public Error {
public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : Error(msg + " (byte " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::size_t byte_offset() const { return offset_; }

private:
  std::size_t offset_;
};

/// Invalid parameter or configuration value.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// File system failure (open, read, write, truncation).
class IoError : public Error {
public:
  using Error::Error;
};

/// Unknown or mismatched schema/format version.
class VersionError : public Error {
public:
  using Error::Error;
};

/// Stored checksum does not match recomputed checksum.
class ChecksumError : public Error {
public:
  using Error::Error;
};

/// Caller violated an interface contract (mismatched lengths, class sets...).
class ContractError : public Error {
public:
  using Error::Error;
};

/// Scene generation could not satisfy placement constraints.
class GenerationError : public Error {
public:
  using Error::Error;
};

} // namespace wbh

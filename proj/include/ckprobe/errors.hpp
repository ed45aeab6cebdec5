#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ckprobe {

// Base class for every error the toolkit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration (vocab size mismatch, missing flags, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `where` is a line number or a JSON path.
class ParseError : public Error {
 public:
  ParseError(std::string where, const std::string& what)
      : Error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

// An aggregate over an empty set (e.g. no shared subjects).
class EmptyError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Query longer than the scorer accepts.
class LengthError : public Error {
 public:
  LengthError(std::size_t length, std::size_t max_length)
      : Error("sequence length " + std::to_string(length) +
              " exceeds maximum " + std::to_string(max_length)),
        length_(length),
        max_length_(max_length) {}
  std::size_t length() const noexcept { return length_; }
  std::size_t max_length() const noexcept { return max_length_; }

 private:
  std::size_t length_;
  std::size_t max_length_;
};

// Connection refused, timeout, dropped socket. `attempts` is how many tries
// were made before giving up.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts, bool retryable)
      : Error(what), attempts_(attempts), retryable_(retryable) {}
  int attempts() const noexcept { return attempts_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int attempts_;
  bool retryable_;
};

// The server answered, but with a non-success status or a malformed body.
class ProtocolError : public Error {
 public:
  ProtocolError(int status, std::string server_message)
      : Error("server returned status " + std::to_string(status) + ": " +
              server_message),
        status_(status),
        server_message_(std::move(server_message)) {}
  int status() const noexcept { return status_; }
  const std::string& server_message() const noexcept {
    return server_message_;
  }

 private:
  int status_;
  std::string server_message_;
};

}  // namespace ckprobe

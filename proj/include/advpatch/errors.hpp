#pragma once

#include <stdexcept>
#include <string>

namespace advpatch {

// Bad argument to an API call (zero dimension, non-positive distance, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A configuration that parses but violates a documented invariant.
class InvalidConfiguration : public std::runtime_error {
 public:
  explicit InvalidConfiguration(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Input file problems: missing files, bad PNG, non-monotone manifests.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Base of everything that can go wrong across the oracle boundary.
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Timeouts and connection failures; safe to retry.
class RetryableError : public OracleError {
 public:
  using OracleError::OracleError;
};

// The peer answered, but not with the documented schema.
class ProtocolError : public OracleError {
 public:
  using OracleError::OracleError;
};

// Non-2xx answer.
class RemoteError : public OracleError {
 public:
  RemoteError(int status, std::string body)
      : OracleError("remote error " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

}  // namespace advpatch

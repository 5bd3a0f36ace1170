#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace splitzip {

enum class ErrorKind {
  EmptyInput,
  RejectedInput,
  Config,
  Domain,
  MalformedStream,
  Corruption,
  BadMagic,
  UnsupportedVersion,
  Truncation,
  LengthMismatch,
  Checksum,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::RejectedInput: return "rejected-input";
    case ErrorKind::Config: return "config";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::MalformedStream: return "malformed-stream";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::BadMagic: return "bad-magic";
    case ErrorKind::UnsupportedVersion: return "unsupported-version";
    case ErrorKind::Truncation: return "truncation";
    case ErrorKind::LengthMismatch: return "length-mismatch";
    case ErrorKind::Checksum: return "checksum";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library carries a classification so callers
/// (and the CLI exit-code mapping) can tell format damage from bad arguments.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace splitzip

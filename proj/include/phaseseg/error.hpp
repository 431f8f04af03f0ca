#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace phaseseg {

enum class ErrorKind {
  parse,
  validation,
  invalid_argument,
  shape_mismatch,
  io,
  segmenter,
  fingerprint_mismatch,
  numeric,
  not_found,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-readable kind so the
/// CLI can emit a single-line `error: <kind>: <message>` diagnostic.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace phaseseg

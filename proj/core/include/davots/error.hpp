#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace davots {

/// Broad failure categories. The service maps them onto HTTP status codes and
/// the CLI onto exit codes, so every thrown Error must pick the right one.
enum class ErrorKind {
  invalid_argument,  // caller supplied something malformed (400 / exit 2)
  not_found,         // unknown dataset, stage, ordering (404)
  out_of_range,      // slice window past the end (416)
  io,                // filesystem failure
  integrity,         // checksum or manifest mismatch
  compute,           // numerical failure during a computation
};

std::string_view to_string(ErrorKind kind) noexcept;

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

}  // namespace davots

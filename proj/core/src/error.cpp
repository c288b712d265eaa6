#include "davots/error.hpp"

namespace davots {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::out_of_range: return "out_of_range";
    case ErrorKind::io: return "io";
    case ErrorKind::integrity: return "integrity";
    case ErrorKind::compute: return "compute";
  }
  return "unknown";
}

}  // namespace davots

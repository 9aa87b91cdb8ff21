#include "sdnguard/error.hpp"

namespace sdnguard {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Ordering: return "ordering error";
    case ErrorKind::Window: return "window-assignment error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Consistency: return "consistency error";
    case ErrorKind::Calibration: return "calibration error";
    case ErrorKind::Attribution: return "attribution error";
    case ErrorKind::Divergence: return "training-divergence error";
  }
  return "error";
}

Error::Error(ErrorKind kind, std::string module, const std::string& message)
    : std::runtime_error(module + ": " + std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      module_(std::move(module)) {}

void fail(ErrorKind kind, std::string_view module, const std::string& message) {
  throw Error(kind, std::string(module), message);
}

}  // namespace sdnguard

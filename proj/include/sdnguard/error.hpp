#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sdnguard {

enum class ErrorKind {
  Config,       // malformed configuration, unknown names, bad knobs
  Io,           // unreadable/unwritable paths
  Validation,   // malformed or non-finite data
  Ordering,     // unsorted streams
  Window,       // event outside its accumulation window
  Shape,        // tensor shape mismatch
  Consistency,  // internal state mismatch (stale caches, out-of-order logs)
  Calibration,  // insufficient or unusable calibration samples
  Attribution,  // abnormal verdict without provenance
  Divergence,   // non-finite losses or gradients
};

std::string_view to_string(ErrorKind kind);

/// Error raised by every module. Carries the module name so the CLI can
/// attribute failures when they propagate out of a pipeline.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

 private:
  ErrorKind kind_;
  std::string module_;
};

[[noreturn]] void fail(ErrorKind kind, std::string_view module, const std::string& message);

}  // namespace sdnguard

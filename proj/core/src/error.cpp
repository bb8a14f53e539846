#include "mftp/error.hpp"

namespace mftp {

std::string_view to_string(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::insufficient_data: return "insufficient-data";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::fit: return "fit";
    case ErrorCategory::policy: return "policy";
    case ErrorCategory::estimate: return "estimate";
    case ErrorCategory::diagnostic: return "diagnostic-unavailable";
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::scenario: return "scenario";
    case ErrorCategory::internal: return "internal";
  }
  return "unknown";
}

Error::Error(ErrorCategory category, const std::string& message)
    : std::runtime_error(message), category_(category) {}

void throw_dimension(const std::string& what, std::size_t expected, std::size_t actual) {
  throw Error(ErrorCategory::dimension, what + ": expected length " + std::to_string(expected) +
                                            ", got " + std::to_string(actual));
}

}  // namespace mftp

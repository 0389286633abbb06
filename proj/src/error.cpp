#include "segilm/error.hpp"

namespace segilm {

std::string_view to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::io: return "io";
    case ErrorCategory::format: return "format";
    case ErrorCategory::version: return "version";
    case ErrorCategory::checksum: return "checksum";
    case ErrorCategory::dimension: return "dimension";
    case ErrorCategory::divergence: return "divergence";
    case ErrorCategory::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::io: return 3;
    case ErrorCategory::format: return 4;
    case ErrorCategory::version: return 5;
    case ErrorCategory::checksum: return 6;
    case ErrorCategory::dimension: return 7;
    case ErrorCategory::divergence: return 8;
    case ErrorCategory::invalid_argument: return 2;
  }
  return 1;
}

}  // namespace segilm

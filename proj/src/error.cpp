#include "surf/error.hpp"

namespace surf {

const char* error_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parameter: return "PARAMETER";
    case ErrorKind::format: return "FORMAT";
    case ErrorKind::config: return "CONFIG";
    case ErrorKind::structural: return "STRUCTURAL";
    case ErrorKind::state: return "STATE";
    case ErrorKind::io: return "IO";
  }
  return "UNKNOWN";
}

}  // namespace surf

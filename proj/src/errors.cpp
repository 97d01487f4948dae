#include "gyrocomp/errors.hpp"

namespace gyrocomp {

const char* toString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::OutOfRange: return "out-of-range";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Ordering: return "ordering";
    case ErrorKind::NoData: return "no-data";
    case ErrorKind::InvalidInterval: return "invalid-interval";
    case ErrorKind::DegenerateWarp: return "degenerate-warp";
    case ErrorKind::AmbiguousSolution: return "ambiguous-solution";
    case ErrorKind::Cheirality: return "cheirality-failure";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, std::string module, const std::string& detail)
    : std::runtime_error(module + ": " + detail),
      kind_(kind),
      module_(std::move(module)),
      detail_(detail) {}

}  // namespace gyrocomp

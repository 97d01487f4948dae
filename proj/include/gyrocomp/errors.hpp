#pragma once

#include <stdexcept>
#include <string>

namespace gyrocomp {

enum class ErrorKind {
  InvalidArgument,
  OutOfRange,
  Parse,
  Ordering,
  NoData,
  InvalidInterval,
  DegenerateWarp,
  AmbiguousSolution,
  Cheirality,
  Dimension,
  Io,
};

const char* toString(ErrorKind kind);

/// Every failure raised by the library. The message is prefixed with the
/// module that produced it, e.g. "mixtures: ambiguous solution ...".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string module_;
  std::string detail_;
};

}  // namespace gyrocomp

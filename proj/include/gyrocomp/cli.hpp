#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>

namespace gyrocomp::cli {

/// Runs the `gyrocomp` command line. Results go to `out`; logs and error
/// messages go to `err`. Returns 0 on success, 1 when a pipeline step
/// fails and 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

/// Mixture bandwidth from the command line: "27" is pixels, "0.1h" is a
/// fraction of the frame height.
double parseSigma(const std::string& text, double frame_height);

/// Half-open index range "a:b" (either side may be empty) clipped to
/// [0, n). An empty string selects everything; b < a is a Parse error.
struct PairRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};
PairRange parsePairRange(const std::string& text, std::size_t n);

}  // namespace gyrocomp::cli

#pragma once

#include "gyrocomp/geometry.hpp"

#include <filesystem>
#include <iosfwd>

namespace gyrocomp {

/// Middlebury .flo: "PIEH", int32 width, int32 height, then row-major
/// float32 (u, v) pairs, all little-endian. Values are narrowed to float32
/// on write.
void writeFlo(const FlowField& flow, std::ostream& out);
void writeFlo(const FlowField& flow, const std::filesystem::path& path);

FlowField readFlo(std::istream& in);
FlowField readFlo(const std::filesystem::path& path);

}  // namespace gyrocomp

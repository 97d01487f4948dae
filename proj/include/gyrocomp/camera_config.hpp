#pragma once

#include "gyrocomp/geometry.hpp"
#include "gyrocomp/gyro.hpp"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace gyrocomp {

/// Intrinsics, rolling-shutter timing and frame size of one camera.
struct CameraConfig {
  CameraIntrinsics intrinsics{300.0, 300.0, 180.0, 135.0, 0.0};
  RsTiming timing{0.8 / 30.0, 1.0 / 30.0, 6};
  int width = 360;
  int height = 270;

  void validate() const;
  bool operator==(const CameraConfig&) const = default;
};

/// key=value text with keys fx, fy, cx, cy, skew, t_s, t_f, n_patches, width,
/// height. Missing keys keep their current value in `base`; unknown keys are
/// a parse error.
CameraConfig parseCameraConfig(std::istream& in, CameraConfig base = {});
CameraConfig loadCameraConfig(const std::filesystem::path& path, CameraConfig base = {});
void writeCameraConfig(const CameraConfig& cfg, std::ostream& out);

/// Applies key=value overrides using the same keys as the file format.
CameraConfig applyCameraOverrides(CameraConfig cfg, const std::map<std::string, std::string>& kv);

}  // namespace gyrocomp

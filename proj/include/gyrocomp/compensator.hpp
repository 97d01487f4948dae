#pragma once

#include "gyrocomp/geometry.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gyrocomp {

/// Parametric OIS compensation: corrected patch i is C_i * H_gyro,i, and a
/// global bias is added to the resulting flow.
struct PatchCorrection {
  std::vector<Mat3> mats;
  Vec2 bias = Vec2::Zero();

  int nPatches() const noexcept { return static_cast<int>(mats.size()); }
  static PatchCorrection identity(int n_patches);
  /// Throws DegenerateWarp for a singular C_i, InvalidArgument for
  /// non-finite values or an empty correction.
  void validate() const;
};

struct CorrectionPair {
  HomographyArray gyro;
  HomographyArray gt;
};

/// Per patch, C_i = argmin sum_pairs min_s |C_i H_gyro,i - s H_gt,i|_F^2
/// with C_i(2,2) = 1, inputs h22-normalized, and the norm taken in
/// coordinates centred on `image_center` and scaled by 1 / max(|cx|, |cy|).
/// Leaving each pair's scale s free makes the fit exact whenever
/// H_gt,i is proportional to C H_gyro,i. The bias is the mean, over pairs,
/// of the gt minus corrected displacement of `image_center`.
///
/// Throws InvalidArgument with fewer than 4 pairs or mismatched patch
/// counts, DegenerateWarp when the normal matrix or a C_i is singular.
PatchCorrection fitCorrection(std::span<const CorrectionPair> pairs, const Vec2& image_center);

/// {C_i H_gyro,i}; throws Dimension on a patch-count mismatch.
HomographyArray correctHomographies(const PatchCorrection& c, const HomographyArray& gyro);

/// Flow of the corrected array plus the bias at every pixel.
FlowField applyCorrection(const PatchCorrection& c, const HomographyArray& gyro, int width, int height,
                          PatchBlend blend = PatchBlend::Hard, int jobs = 1);

/// {"n_patches": N, "mats": [[9 floats, row-major]...], "bias": [u, v]}
std::string correctionToJson(const PatchCorrection& c);
PatchCorrection parseCorrection(const std::string& json);
PatchCorrection loadCorrection(const std::filesystem::path& path);
void saveCorrection(const PatchCorrection& c, const std::filesystem::path& path);

}  // namespace gyrocomp

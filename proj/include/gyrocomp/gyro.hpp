#pragma once

#include "gyrocomp/geometry.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace gyrocomp {

/// One gyroscope reading: monotonic timestamp in nanoseconds and angular
/// velocity in rad/s. The rate drives the camera orientation R(t)
/// (world-to-camera) as dR/dt = [omega]x R, so integrating a constant
/// omega for T seconds gives rodrigues(omega * T).
struct GyroSample {
  std::int64_t t_ns = 0;
  Vec3 omega = Vec3::Zero();
};

/// Rolling-shutter timing. t_s = 0 is the global-shutter limit.
struct RsTiming {
  double readout_s = 0.0;       // first row to last row exposure start
  double frame_period_s = 0.0;  // 1 / fps
  int n_patches = 6;

  void validate() const;
  bool operator==(const RsTiming&) const = default;
};

struct FrameStamp {
  std::int64_t index = 0;
  std::int64_t t_start_ns = 0;  // exposure start of the first row

  bool operator==(const FrameStamp&) const = default;
};

inline double nsToSeconds(std::int64_t ns) { return static_cast<double>(ns) * 1e-9; }

/// CSV, one sample per line: t_ns,omega_x,omega_y,omega_z. Blank lines and
/// lines starting with '#' are skipped.
std::vector<GyroSample> parseGyroLog(std::istream& in);
void writeGyroLog(std::span<const GyroSample> samples, std::ostream& out);

/// CSV, one frame per line: frame_index,t_start_ns.
std::vector<FrameStamp> parseFrameStamps(std::istream& in);
void writeFrameStamps(std::span<const FrameStamp> frames, std::ostream& out);

/// Exposure start of patch i in frame a and in the frame one period later,
/// in seconds: t_a = t_start + t_s * i / N, t_b = t_a + t_f.
std::pair<double, double> patchExposureTimes(const FrameStamp& frame, const RsTiming& timing,
                                             int patch);

/// Validated, time-ordered gyro stream ready for integration.
///
/// Between samples the rate is piecewise linear; each sub-interval is
/// integrated with its midpoint rate. Outside the logged span the nearest
/// sample is held (a warning is logged when the gap exceeds two sample
/// periods). Orientation is accumulated from the sample at or before the
/// query start, so integrate(t0, t2) == integrate(t1, t2) * integrate(t0, t1)
/// up to rounding.
class GyroLog {
 public:
  /// `axis_map` maps gyro axes onto camera axes (a signed permutation in
  /// practice). Throws NoData on an empty log, Ordering when timestamps do
  /// not strictly increase.
  explicit GyroLog(std::vector<GyroSample> samples, const Mat3& axis_map = Mat3::Identity());

  std::span<const GyroSample> samples() const noexcept { return samples_; }
  double startTime() const { return times_.front(); }
  double endTime() const { return times_.back(); }
  double nominalPeriod() const noexcept { return period_; }

  /// Camera-axis rate at time t (seconds).
  Vec3 rateAt(double t) const;

  /// R(t1) R(t0)^T for t0 <= t1, in seconds.
  Rotation integrate(double t0, double t1) const;

 private:
  std::size_t knotAtOrBefore(double t) const;
  Rotation step(double from, double to) const;

  std::vector<GyroSample> samples_;
  std::vector<double> times_;
  std::vector<Vec3> rates_;
  double period_ = 0.0;
};

Rotation integrateRotation(std::span<const GyroSample> samples, double t0, double t1,
                           const Mat3& axis_map = Mat3::Identity());

/// Per-patch H_i = K R(t_b(i)) R(t_a(i))^T K^-1 between two frames, with
/// t_a(i) and t_b(i) the exposure starts of patch i in each frame.
HomographyArray gyroHomographyArray(const GyroLog& log, const FrameStamp& frame_a,
                                    const FrameStamp& frame_b, const RsTiming& timing,
                                    const CameraIntrinsics& k, int frame_height);

/// Gyro-based flow G_ab.
FlowField gyroFlow(const GyroLog& log, const FrameStamp& frame_a, const FrameStamp& frame_b,
                   const RsTiming& timing, const CameraIntrinsics& k, int width, int height,
                   PatchBlend blend = PatchBlend::Hard, int jobs = 1);

}  // namespace gyrocomp

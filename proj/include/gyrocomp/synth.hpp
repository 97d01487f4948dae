#pragma once

#include "gyrocomp/camera_config.hpp"
#include "gyrocomp/geometry.hpp"
#include "gyrocomp/gyro.hpp"
#include "gyrocomp/mixtures.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace gyrocomp {

enum class TrajectoryKind { Zero, Constant, Sinusoid, RandomWalk };

/// Camera angular velocity (camera axes, same convention as GyroSample) and
/// camera translation.
struct TrajectoryParams {
  TrajectoryKind kind = TrajectoryKind::RandomWalk;
  Vec3 omega = Vec3::Zero();  // constant rate, or mean added to the other kinds
  Vec3 amplitude = Vec3(0.3, 0.3, 0.1);  // sinusoid amplitude / walk std, rad/s
  Vec3 frequency_hz = Vec3(2.0, 2.7, 1.3);
  Vec3 phase = Vec3::Zero();
  double walk_cutoff_hz = 4.0;
  double walk_knot_s = 0.01;
  /// Per-frame camera translation as a fraction of the nearest scene depth.
  double translation_scale = 0.02;
  /// Translation direction in world axes; zero picks a seeded, mostly forward
  /// one (lateral component 0.3 of the forward one). Lateral motion is
  /// nearly confounded with rotation when fundamentals are fitted to thin
  /// row strips.
  Vec3 translation_dir = Vec3::Zero();
};

enum class OisKind {
  None,
  Constant,  // fixed lens offset
  Drift,     // offset + velocity * t: a constant shift between frames
  Shake,     // -gain * low-pass(image motion), saturating
};

struct OisParams {
  OisKind kind = OisKind::None;
  Vec2 shift = Vec2::Zero();     // Constant offset / Drift start, pixels
  Vec2 velocity = Vec2::Zero();  // Drift rate, pixels per second
  double gain = 0.7;
  double cutoff_hz = 8.0;
  double max_shift = 15.0;
};

/// Non-planar surface in world coordinates: z_mid plus three layers
/// A_l sin(2 pi r_l X / L + a_l) cos(2 pi r_l Y / L + b_l) with r = 1, 3, 7,
/// depth confined to [z_min, z_max]. The finer layers keep narrow image
/// strips from seeing a near-planar scene.
struct SceneParams {
  double z_min = 3.0;
  double z_max = 6.0;
  double wavelength = 10.0;
  int points_per_pair = 300;
  int annotations_per_pair = 8;
};

struct SimConfig {
  CameraConfig camera;
  TrajectoryParams trajectory;
  OisParams ois;
  SceneParams scene;
  int n_frames = 30;
  double gyro_rate_hz = 200.0;
  double gyro_noise = 5e-4;  // rad/s, zero-mean Gaussian
  Vec3 gyro_bias = Vec3::Zero();
  double first_frame_s = 0.1;  // the gyro log starts at t = 0
  std::uint64_t seed = 1;

  void validate() const;
};

/// What a projection includes besides the camera rotation.
struct ProjectOptions {
  bool ois = true;
  bool translation = true;
};

/// Ground-truth camera, scene and lens model behind one synthetic sequence.
/// Orientation is integrated independently of the gyro module (quaternion
/// RK4 on a 0.1 ms grid, slerp in between).
class Simulator {
 public:
  explicit Simulator(const SimConfig& config);

  const SimConfig& config() const noexcept { return config_; }
  const std::vector<FrameStamp>& frames() const noexcept { return frames_; }

  Vec3 omega(double t) const;
  Eigen::Quaterniond orientation(double t) const;  // world-to-camera
  Mat3 orientationMatrix(double t) const { return orientation(t).toRotationMatrix(); }
  Vec3 position(double t) const;  // camera centre, world coordinates
  Vec2 oisShift(double t) const;
  double surfaceDepth(double x, double y) const;

  /// Gyro readings at the configured rate with noise and bias.
  std::vector<GyroSample> gyroLog() const;

  /// Exposure start of (continuous) row y in a frame.
  double rowTime(const FrameStamp& frame, double y) const;

  /// Pixel of X at a fixed time, or nothing if X is behind the camera.
  std::optional<Vec2> projectAt(const Vec3& x, double t, ProjectOptions opt = {}) const;
  /// Rolling-shutter projection: the row whose exposure time sees X there.
  std::optional<Vec2> projectRs(const Vec3& x, const FrameStamp& frame, ProjectOptions opt = {}) const;
  /// Surface point seen at pixel p (at its row's exposure time).
  std::optional<Vec3> backProject(const Vec2& p, const FrameStamp& frame, ProjectOptions opt = {}) const;

  /// R(tb) R(ta)^T from the truth orientation.
  Mat3 relativeRotation(double ta, double tb) const;
  /// Per-patch true rotation homographies (no OIS, no translation).
  HomographyArray truePatchHomographies(const FrameStamp& a, const FrameStamp& b) const;
  /// Per-patch homographies of the observed images: T(s_b) K R K^-1 T(-s_a),
  /// s evaluated at the patch exposure starts.
  HomographyArray observedPatchHomographies(const FrameStamp& a, const FrameStamp& b) const;

  /// Rotation-only flow: every pixel ray rotated by its patch's true
  /// rotation (no OIS, no translation).
  FlowField rotationFlow(const FrameStamp& a, const FrameStamp& b, int jobs = 1) const;
  /// Exact per-pixel image motion with rolling shutter, translation and OIS.
  FlowField fullFlow(const FrameStamp& a, const FrameStamp& b, int jobs = 1,
                     ProjectOptions opt = {}) const;

  /// Stratified exact correspondences; both ends lie inside
  /// [0, w-1] x [0, h-1]. Deterministic in `stream_seed`.
  std::vector<Correspondence> sampleCorrespondences(const FrameStamp& a, const FrameStamp& b,
                                                    int count, std::uint64_t stream_seed,
                                                    ProjectOptions opt = {}) const;

 private:
  struct SurfaceLayer {
    double ratio;      // wavelength divisor
    double amplitude;  // fraction of (z_max - z_min) / 2
  };
  static constexpr std::array<SurfaceLayer, 3> kSurfaceLayers{{{1.0, 0.55}, {3.0, 0.25}, {7.0, 0.08}}};

  double surfaceAt(double x, double y, Vec2* gradient) const;
  std::optional<Vec3> raycast(const Vec3& origin, const Vec3& dir) const;

  SimConfig config_;
  std::vector<FrameStamp> frames_;
  double end_time_ = 0.0;
  // trajectory
  std::vector<double> walk_values_[3];
  Vec3 translation_velocity_ = Vec3::Zero();
  std::array<Vec2, kSurfaceLayers.size()> surface_phase_{};
  // truth orientation grid
  double grid_step_ = 1e-4;
  std::vector<Eigen::Quaterniond> grid_;
  // OIS (Shake) grid, same step
  std::vector<Vec2> ois_grid_;
};

struct SynthPair {
  std::size_t a = 0;  // indices into SynthBundle::frames
  std::size_t b = 0;
  std::vector<Correspondence> corrs;
  std::vector<Correspondence> annotations;
};

/// Everything generated for one sequence. Dense flows are computed on
/// demand so long sequences stay small in memory.
struct SynthBundle {
  SimConfig config;
  std::shared_ptr<const Simulator> sim;
  std::vector<GyroSample> gyro;
  std::vector<FrameStamp> frames;
  std::vector<SynthPair> pairs;

  FlowField rotationFlow(std::size_t pair, int jobs = 1) const;
  FlowField fullFlow(std::size_t pair, int jobs = 1) const;
  HomographyArray truePatchHomographies(std::size_t pair) const;
  HomographyArray observedPatchHomographies(std::size_t pair) const;
};

/// Gyro log, frame stamps and per-consecutive-pair correspondences and
/// annotation points for a sequence. Pairs are generated in parallel; the
/// result depends only on the config.
SynthBundle simulateSequence(const SimConfig& config, int jobs = 1);

/// Stream seed for sub-generator `stream` of a run seeded with `seed`.
std::uint64_t deriveSeed(std::uint64_t seed, std::uint64_t stream);

}  // namespace gyrocomp

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace gyrocomp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Element of SO(3). Construction from an arbitrary matrix validates
/// orthonormality and a positive determinant.
class Rotation {
 public:
  Rotation() : m_(Mat3::Identity()) {}

  /// Throws InvalidArgument unless m'm = I and det(m) = 1 within `tol`.
  static Rotation fromMatrix(const Mat3& m, double tol = 1e-9);
  /// Closest rotation in Frobenius norm (SVD projection).
  static Rotation nearest(const Mat3& m);

  const Mat3& matrix() const noexcept { return m_; }
  Rotation transpose() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& rhs) const { return Rotation(m_ * rhs.m_); }

  /// Frobenius norm of m'm - I.
  double orthonormalityError() const;

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}
  Mat3 m_;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;

  void validate() const;
  Mat3 matrix() const;
  Mat3 inverseMatrix() const;

  bool operator==(const CameraIntrinsics&) const = default;
};

/// Projective 3x3 transform, stored scaled so that h(2,2) = 1 whenever
/// |h(2,2)| > 1e-12. Otherwise the matrix is kept as given and
/// `normalized()` reports false.
class Homography {
 public:
  Homography() : h_(Mat3::Identity()) {}
  explicit Homography(const Mat3& h);

  static Homography translation(double tx, double ty);

  const Mat3& matrix() const noexcept { return h_; }
  bool normalized() const noexcept { return normalized_; }

  /// Maps a pixel and dehomogenizes. Throws DegenerateWarp when the mapped
  /// point reaches the plane at infinity (w <= 1e-12).
  Vec2 apply(const Vec2& p) const;

 private:
  Mat3 h_;
  bool normalized_ = true;
};

/// One homography per horizontal row patch. Patch i covers rows
/// [i*h/N, (i+1)*h/N).
struct HomographyArray {
  std::vector<Homography> patches;
  int frame_height = 0;

  std::size_t size() const noexcept { return patches.size(); }
  void validate() const;
  /// Index of the patch that owns row coordinate y (clamped to the frame).
  int patchForRow(double y) const;
};

/// Dense per-pixel displacement field, forward from frame a to frame b.
/// Pixel (x, y) sits at integer coordinates; values are stored interleaved
/// (u, v) in row-major order.
class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }

  Vec2 at(int x, int y) const {
    const std::size_t k = index(x, y);
    return {uv_[k], uv_[k + 1]};
  }
  void set(int x, int y, const Vec2& d) {
    const std::size_t k = index(x, y);
    uv_[k] = d.x();
    uv_[k + 1] = d.y();
  }

  std::span<double> data() noexcept { return uv_; }
  std::span<const double> data() const noexcept { return uv_; }

  /// Bilinear sample; p must lie in [0, w-1] x [0, h-1] (OutOfRange otherwise).
  Vec2 sampleBilinear(const Vec2& p) const;
  bool allFinite() const;

 private:
  std::size_t index(int x, int y) const {
    return 2 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x));
  }
  int width_ = 0;
  int height_ = 0;
  std::vector<double> uv_;
};

/// How rows between patch centres pick their homography when synthesizing
/// a flow field.
enum class PatchBlend {
  Hard,        // row uses its own patch's homography
  LinearRows,  // entrywise interpolation between neighbouring patch centres
};

Mat3 skew(const Vec3& v);

/// exp of the skew matrix of v. Angles below 1e-12 rad give the identity.
Rotation rodrigues(const Vec3& v);

/// Inverse of rodrigues, angle in [0, pi].
Vec3 rotationLog(const Rotation& r);

/// Angle of r1' r2 in radians.
double geodesicDistance(const Rotation& r1, const Rotation& r2);

/// Left-to-right product r[0] * r[1] * ... , projected back onto SO(3)
/// whenever the accumulated drift exceeds 1e-9.
Rotation composeRotations(std::span<const Rotation> rotations);

/// H = K R K^-1.
Homography rotationToHomography(const Rotation& r, const CameraIntrinsics& k);

/// flow(p) = H_i p - p for every pixel, H_i chosen by row patch. Rows are
/// processed in parallel with `jobs` threads; output does not depend on it.
FlowField homographyArrayToFlow(const HomographyArray& arr, int width, int height,
                                PatchBlend blend = PatchBlend::Hard, int jobs = 1);

double meanEndpointError(const FlowField& a, const FlowField& b);
double maxAbsDifference(const FlowField& a, const FlowField& b);

}  // namespace gyrocomp

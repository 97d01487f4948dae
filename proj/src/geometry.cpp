#include "gyrocomp/geometry.hpp"

#include "gyrocomp/errors.hpp"
#include "gyrocomp/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "geometry";
constexpr double kDriftTolerance = 1e-9;

void requireSameShape(const FlowField& a, const FlowField& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::Dimension, kModule, "flow fields differ in size");
  }
}

}  // namespace

Rotation Rotation::fromMatrix(const Mat3& m, double tol) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "rotation matrix has non-finite entries");
  }
  const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
  const double det = m.determinant();
  if (ortho > tol || std::abs(det - 1.0) > tol) {
    throw Error(ErrorKind::InvalidArgument, kModule,
                "matrix is not a rotation (orthonormality error " + std::to_string(ortho) +
                    ", det " + std::to_string(det) + ")");
  }
  return Rotation(m);
}

Rotation Rotation::nearest(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  return Rotation(svd.matrixU() * d * svd.matrixV().transpose());
}

double Rotation::orthonormalityError() const {
  return (m_.transpose() * m_ - Mat3::Identity()).norm();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy) ||
      !std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(skew)) {
    throw Error(ErrorKind::InvalidArgument, kModule,
                "intrinsics need finite values with fx > 0 and fy > 0");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraIntrinsics::inverseMatrix() const {
  Mat3 inv;
  inv << 1.0 / fx, -skew / (fx * fy), (skew * cy - cx * fy) / (fx * fy),  //
      0.0, 1.0 / fy, -cy / fy,                                            //
      0.0, 0.0, 1.0;
  return inv;
}

Homography::Homography(const Mat3& h) : h_(h) {
  if (!h.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "homography has non-finite entries");
  }
  const double scale = h.cwiseAbs().maxCoeff();
  if (scale == 0.0 || std::abs(h.determinant()) <= 1e-12 * scale * scale * scale) {
    throw Error(ErrorKind::InvalidArgument, kModule, "homography is singular");
  }
  if (std::abs(h(2, 2)) > 1e-12) {
    h_ /= h(2, 2);
  } else {
    normalized_ = false;
  }
}

Homography Homography::translation(double tx, double ty) {
  Mat3 t = Mat3::Identity();
  t(0, 2) = tx;
  t(1, 2) = ty;
  return Homography(t);
}

Vec2 Homography::apply(const Vec2& p) const {
  const Vec3 q = h_ * p.homogeneous();
  if (q.z() <= 1e-12) {
    throw Error(ErrorKind::DegenerateWarp, kModule, "point maps to the plane at infinity");
  }
  return q.head<2>() / q.z();
}

void HomographyArray::validate() const {
  if (patches.empty()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "homography array needs at least one patch");
  }
  if (frame_height <= 0) {
    throw Error(ErrorKind::InvalidArgument, kModule, "homography array needs a positive frame height");
  }
}

int HomographyArray::patchForRow(double y) const {
  const int n = static_cast<int>(patches.size());
  const int i = static_cast<int>(std::floor(y * n / frame_height));
  return std::clamp(i, 0, n - 1);
}

FlowField::FlowField(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, kModule, "flow field needs positive dimensions");
  }
  uv_.assign(2 * static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0.0);
}

Vec2 FlowField::sampleBilinear(const Vec2& p) const {
  if (!p.allFinite() || p.x() < 0.0 || p.y() < 0.0 || p.x() > width_ - 1 || p.y() > height_ - 1) {
    throw Error(ErrorKind::OutOfRange, kModule,
                "sample point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                    ") outside flow domain");
  }
  const int x0 = std::min(static_cast<int>(p.x()), std::max(width_ - 2, 0));
  const int y0 = std::min(static_cast<int>(p.y()), std::max(height_ - 2, 0));
  const int x1 = std::min(x0 + 1, width_ - 1);
  const int y1 = std::min(y0 + 1, height_ - 1);
  const double ax = p.x() - x0;
  const double ay = p.y() - y0;
  return (1 - ax) * (1 - ay) * at(x0, y0) + ax * (1 - ay) * at(x1, y0) +
         (1 - ax) * ay * at(x0, y1) + ax * ay * at(x1, y1);
}

bool FlowField::allFinite() const {
  return std::all_of(uv_.begin(), uv_.end(), [](double v) { return std::isfinite(v); });
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

Rotation rodrigues(const Vec3& v) {
  if (!v.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "rotation vector has non-finite entries");
  }
  const double theta = v.norm();
  if (theta < 1e-12) return Rotation();
  const Mat3 k = skew(v / theta);
  const Mat3 r = Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * k * k;
  return Rotation::fromMatrix(r, 1e-9);
}

Vec3 rotationLog(const Rotation& r) {
  const Mat3& m = r.matrix();
  const Vec3 w(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  const double s = 0.5 * w.norm();
  const double c = 0.5 * (m.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (theta < 1e-6) {
    // series of theta / (2 sin theta)
    return 0.5 * (1.0 + theta * theta / 6.0) * w;
  }
  if (M_PI - theta < 1e-6) {
    // near pi the antisymmetric part vanishes; recover the axis from R + I
    const Mat3 b = (m + Mat3::Identity()) / 2.0;
    int col = 0;
    b.diagonal().maxCoeff(&col);
    Vec3 axis = b.col(col) / std::sqrt(std::max(b(col, col), 1e-300));
    if (axis.dot(w) < 0) axis = -axis;
    return theta * axis.normalized();
  }
  return theta / (2.0 * s) * w;
}

double geodesicDistance(const Rotation& r1, const Rotation& r2) {
  return rotationLog(r1.transpose() * r2).norm();
}

Rotation composeRotations(std::span<const Rotation> rotations) {
  if (rotations.empty()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "cannot compose an empty rotation list");
  }
  Rotation acc = rotations.front();
  for (std::size_t i = 1; i < rotations.size(); ++i) {
    acc = acc * rotations[i];
    if (acc.orthonormalityError() > kDriftTolerance) acc = Rotation::nearest(acc.matrix());
  }
  if (acc.orthonormalityError() > kDriftTolerance) acc = Rotation::nearest(acc.matrix());
  return acc;
}

Homography rotationToHomography(const Rotation& r, const CameraIntrinsics& k) {
  k.validate();
  return Homography(k.matrix() * r.matrix() * k.inverseMatrix());
}

FlowField homographyArrayToFlow(const HomographyArray& arr, int width, int height,
                                PatchBlend blend, int jobs) {
  arr.validate();
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, kModule, "flow size must be positive");
  }
  if (arr.frame_height != height) {
    throw Error(ErrorKind::Dimension, kModule,
                "homography array frame height " + std::to_string(arr.frame_height) +
                    " does not match flow height " + std::to_string(height));
  }
  const int n = static_cast<int>(arr.size());
  const double patch_rows = static_cast<double>(height) / n;

  FlowField flow(width, height);
  parallelFor(static_cast<std::size_t>(height), jobs, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    const int patch = arr.patchForRow(y);
    Mat3 h = arr.patches[patch].matrix();
    if (blend == PatchBlend::LinearRows && n > 1) {
      const double s = y / patch_rows - 0.5;  // position in patch-centre units
      if (s > 0.0 && s < n - 1) {
        const int i = static_cast<int>(std::floor(s));
        const double a = s - i;
        h = (1.0 - a) * arr.patches[i].matrix() + a * arr.patches[i + 1].matrix();
      } else {
        h = arr.patches[s <= 0.0 ? 0 : n - 1].matrix();
      }
    }
    for (int x = 0; x < width; ++x) {
      const Vec3 q = h * Vec3(x, y, 1.0);
      if (q.z() <= 1e-12) {
        throw Error(ErrorKind::DegenerateWarp, kModule,
                    "patch " + std::to_string(patch) + " maps pixel (" + std::to_string(x) + ", " +
                        std::to_string(y) + ") to the plane at infinity");
      }
      flow.set(x, y, Vec2(q.x() / q.z() - x, q.y() / q.z() - y));
    }
  });
  return flow;
}

double meanEndpointError(const FlowField& a, const FlowField& b) {
  requireSameShape(a, b);
  double sum = 0.0;
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) sum += (a.at(x, y) - b.at(x, y)).norm();
  }
  return sum / (static_cast<double>(a.width()) * a.height());
}

double maxAbsDifference(const FlowField& a, const FlowField& b) {
  requireSameShape(a, b);
  double m = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

}  // namespace gyrocomp

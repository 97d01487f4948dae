#include "gyrocomp/synth.hpp"

#include "gyrocomp/errors.hpp"
#include "gyrocomp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "synth";
constexpr int kPointAttempts = 64;
constexpr int kFallbackAttempts = 4096;
constexpr int kRaySteps = 96;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double catmullRom(const std::vector<double>& v, double pos) {
  const auto n = static_cast<long>(v.size());
  const long k = std::clamp(static_cast<long>(std::floor(pos)), 0L, n - 2);
  const double s = pos - static_cast<double>(k);
  const auto at = [&](long i) { return v[static_cast<std::size_t>(std::clamp(i, 0L, n - 1))]; };
  const double p0 = at(k - 1), p1 = at(k), p2 = at(k + 1), p3 = at(k + 2);
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * s + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s * s +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s * s * s);
}

Vec2 clampShift(const Vec2& s, double limit) {
  return s.cwiseMax(Vec2::Constant(-limit)).cwiseMin(Vec2::Constant(limit));
}

}  // namespace

std::uint64_t deriveSeed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851F42D4C957F2Dull));
}

void SimConfig::validate() const {
  camera.validate();
  if (n_frames < 2) throw Error(ErrorKind::InvalidArgument, kModule, "need at least 2 frames");
  if (!(gyro_rate_hz >= 2.0 / camera.timing.frame_period_s)) {
    throw Error(ErrorKind::InvalidArgument, kModule,
                "gyro rate must be at least twice the frame rate");
  }
  if (!(gyro_noise >= 0.0) || !gyro_bias.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "gyro noise must be non-negative");
  }
  if (!(scene.z_min > 0.0) || !(scene.z_max > scene.z_min) || !(scene.wavelength > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, kModule, "scene needs 0 < z_min < z_max");
  }
  if (scene.points_per_pair < 1 || scene.annotations_per_pair < 1) {
    throw Error(ErrorKind::InvalidArgument, kModule, "need at least one point per pair");
  }
  if (!(ois.max_shift >= 0.0) || !(ois.gain >= 0.0 && ois.gain <= 1.0) || !(ois.cutoff_hz > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, kModule, "OIS needs 0 <= gain <= 1, cutoff > 0, max shift >= 0");
  }
  if (!(trajectory.translation_scale >= 0.0) || !(trajectory.walk_knot_s > 0.0) ||
      !(trajectory.walk_cutoff_hz > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, kModule, "invalid trajectory parameters");
  }
  if (!(first_frame_s >= 0.0)) throw Error(ErrorKind::InvalidArgument, kModule, "first frame time must be >= 0");
}

Simulator::Simulator(const SimConfig& config) : config_(config) {
  config_.validate();
  const auto& timing = config_.camera.timing;
  for (int k = 0; k < config_.n_frames; ++k) {
    const double t = config_.first_frame_s + k * timing.frame_period_s;
    frames_.push_back({k, std::llround(t * 1e9)});
  }
  end_time_ = nsToSeconds(frames_.back().t_start_ns) + timing.frame_period_s + timing.readout_s + 0.05;

  std::mt19937_64 rng(deriveSeed(config_.seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * M_PI);

  const auto& traj = config_.trajectory;
  if (traj.kind == TrajectoryKind::RandomWalk) {
    // White noise through two equal first-order low-pass stages. The input
    // is scaled so the stationary std equals the amplitude; a burn-in of
    // ten time constants removes the start-up transient.
    const double a = std::exp(-2.0 * M_PI * traj.walk_cutoff_hz * traj.walk_knot_s);
    const double gain_var = std::pow(1.0 - a, 4) * (1.0 + a * a) / std::pow(1.0 - a * a, 3);
    const auto burn_in = static_cast<std::size_t>(std::ceil(10.0 / (1.0 - a)));
    const auto knots = static_cast<std::size_t>(std::ceil(end_time_ / traj.walk_knot_s)) + 4;
    for (int axis = 0; axis < 3; ++axis) {
      auto& v = walk_values_[axis];
      v.resize(knots);
      const double input_sd = traj.amplitude[axis] / std::sqrt(gain_var);
      double s1 = 0.0, s2 = 0.0;
      for (std::size_t k = 0; k < burn_in + knots; ++k) {
        s1 = a * s1 + (1.0 - a) * input_sd * normal(rng);
        s2 = a * s2 + (1.0 - a) * s1;
        if (k >= burn_in) v[k - burn_in] = s2;
      }
    }
  }

  Vec3 dir = traj.translation_dir;
  const double heading = uniform(rng);
  if (dir.squaredNorm() == 0.0) dir = Vec3(0.3 * std::cos(heading), 0.3 * std::sin(heading), 1.0);
  translation_velocity_ =
      dir.normalized() * (traj.translation_scale * config_.scene.z_min / timing.frame_period_s);
  for (auto& phase : surface_phase_) phase = Vec2(uniform(rng), uniform(rng));

  // Truth orientation: quaternion RK4 on dq/dt = 0.5 (0, omega) q.
  const auto nodes = static_cast<std::size_t>(std::ceil(end_time_ / grid_step_)) + 2;
  grid_.resize(nodes);
  grid_[0] = Eigen::Quaterniond::Identity();
  const auto deriv = [&](double t, const Eigen::Vector4d& c) {
    const Vec3 w = omega(t);
    const Eigen::Quaterniond q(c);
    return Eigen::Vector4d(0.5 * (Eigen::Quaterniond(0.0, w.x(), w.y(), w.z()) * q).coeffs());
  };
  for (std::size_t k = 0; k + 1 < nodes; ++k) {
    const double t = static_cast<double>(k) * grid_step_;
    const double h = grid_step_;
    const Eigen::Vector4d c = grid_[k].coeffs();
    const Eigen::Vector4d k1 = deriv(t, c);
    const Eigen::Vector4d k2 = deriv(t + 0.5 * h, c + 0.5 * h * k1);
    const Eigen::Vector4d k3 = deriv(t + 0.5 * h, c + 0.5 * h * k2);
    const Eigen::Vector4d k4 = deriv(t + h, c + h * k3);
    grid_[k + 1] = Eigen::Quaterniond(Eigen::Vector4d(c + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)));
    grid_[k + 1].normalize();
  }

  if (config_.ois.kind == OisKind::Shake) {
    // Lens shift follows the low-passed principal-point image motion with
    // opposite sign; image motion of the optical axis is (fx w_y, -fy w_x).
    const auto& k = config_.camera.intrinsics;
    const double beta = 1.0 - std::exp(-2.0 * M_PI * config_.ois.cutoff_hz * grid_step_);
    ois_grid_.resize(nodes);
    Vec3 angle = Vec3::Zero();
    Vec2 filtered = Vec2::Zero();
    ois_grid_[0] = Vec2::Zero();
    for (std::size_t i = 1; i < nodes; ++i) {
      const double t = static_cast<double>(i) * grid_step_;
      angle += 0.5 * grid_step_ * (omega(t - grid_step_) + omega(t));
      const Vec2 image_motion(k.fx * angle.y(), -k.fy * angle.x());
      filtered += beta * (image_motion - filtered);
      ois_grid_[i] = clampShift(-config_.ois.gain * filtered, config_.ois.max_shift);
    }
  }
}

Vec3 Simulator::omega(double t) const {
  const auto& traj = config_.trajectory;
  switch (traj.kind) {
    case TrajectoryKind::Zero:
      return Vec3::Zero();
    case TrajectoryKind::Constant:
      return traj.omega;
    case TrajectoryKind::Sinusoid: {
      Vec3 w = traj.omega;
      for (int i = 0; i < 3; ++i) {
        w[i] += traj.amplitude[i] * std::sin(2.0 * M_PI * traj.frequency_hz[i] * t + traj.phase[i]);
      }
      return w;
    }
    case TrajectoryKind::RandomWalk: {
      const double pos = t / traj.walk_knot_s;
      return traj.omega + Vec3(catmullRom(walk_values_[0], pos), catmullRom(walk_values_[1], pos),
                               catmullRom(walk_values_[2], pos));
    }
  }
  return Vec3::Zero();
}

Eigen::Quaterniond Simulator::orientation(double t) const {
  if (!(t >= 0.0) || t > static_cast<double>(grid_.size() - 1) * grid_step_) {
    throw Error(ErrorKind::OutOfRange, kModule, "time " + std::to_string(t) + " s outside simulated span");
  }
  const double pos = t / grid_step_;
  const auto k = std::min(static_cast<std::size_t>(pos), grid_.size() - 2);
  return grid_[k].slerp(pos - static_cast<double>(k), grid_[k + 1]);
}

Vec3 Simulator::position(double t) const { return translation_velocity_ * t; }

Vec2 Simulator::oisShift(double t) const {
  const auto& ois = config_.ois;
  switch (ois.kind) {
    case OisKind::None:
      return Vec2::Zero();
    case OisKind::Constant:
      return clampShift(ois.shift, ois.max_shift);
    case OisKind::Drift:
      return clampShift(ois.shift + ois.velocity * t, ois.max_shift);
    case OisKind::Shake: {
      const double pos = std::clamp(t / grid_step_, 0.0, static_cast<double>(ois_grid_.size() - 1));
      const auto k = std::min(static_cast<std::size_t>(pos), ois_grid_.size() - 2);
      const double a = pos - static_cast<double>(k);
      return (1.0 - a) * ois_grid_[k] + a * ois_grid_[k + 1];
    }
  }
  return Vec2::Zero();
}

double Simulator::surfaceDepth(double x, double y) const {
  return surfaceAt(x, y, nullptr);
}

double Simulator::surfaceAt(double x, double y, Vec2* gradient) const {
  const auto& s = config_.scene;
  const double half = 0.5 * (s.z_max - s.z_min);
  double z = s.z_min + half;
  if (gradient) gradient->setZero();
  for (std::size_t l = 0; l < kSurfaceLayers.size(); ++l) {
    const double amp = kSurfaceLayers[l].amplitude * half;
    const double k = 2.0 * M_PI * kSurfaceLayers[l].ratio / s.wavelength;
    const double ax = k * x + surface_phase_[l].x();
    const double ay = k * y + surface_phase_[l].y();
    z += amp * std::sin(ax) * std::cos(ay);
    if (gradient) *gradient += amp * k * Vec2(std::cos(ax) * std::cos(ay), -std::sin(ax) * std::sin(ay));
  }
  return z;
}

std::vector<GyroSample> Simulator::gyroLog() const {
  std::mt19937_64 rng(deriveSeed(config_.seed, 2));
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto period_ns = std::llround(1e9 / config_.gyro_rate_hz);
  const auto end_ns = static_cast<std::int64_t>(end_time_ * 1e9);
  std::vector<GyroSample> out;
  out.reserve(static_cast<std::size_t>(end_ns / period_ns) + 1);
  for (std::int64_t t = 0; t <= end_ns; t += period_ns) {
    Vec3 noise(normal(rng), normal(rng), normal(rng));
    out.push_back({t, omega(nsToSeconds(t)) + config_.gyro_bias + config_.gyro_noise * noise});
  }
  return out;
}

double Simulator::rowTime(const FrameStamp& frame, double y) const {
  const auto& cam = config_.camera;
  return nsToSeconds(frame.t_start_ns) + cam.timing.readout_s * y / cam.height;
}

std::optional<Vec2> Simulator::projectAt(const Vec3& x, double t, ProjectOptions opt) const {
  const Vec3 centre = opt.translation ? position(t) : Vec3::Zero();
  const Vec3 xc = orientation(t) * (x - centre);
  if (xc.z() <= 1e-9) return std::nullopt;
  const Vec3 q = config_.camera.intrinsics.matrix() * xc;
  Vec2 p = q.head<2>() / q.z();
  if (opt.ois) p += oisShift(t);
  return p;
}

std::optional<Vec2> Simulator::projectRs(const Vec3& x, const FrameStamp& frame,
                                         ProjectOptions opt) const {
  double y = 0.5 * config_.camera.height;
  for (int it = 0; it < 100; ++it) {
    const auto p = projectAt(x, rowTime(frame, y), opt);
    if (!p) return std::nullopt;
    if (std::abs(p->y() - y) < 1e-11) return p;
    y = p->y();
  }
  return std::nullopt;
}

std::optional<Vec3> Simulator::raycast(const Vec3& origin, const Vec3& dir_in) const {
  const Vec3 dir = dir_in.normalized();
  if (dir.z() < 1e-3) return std::nullopt;
  const auto& s = config_.scene;
  double lo = std::max((s.z_min - origin.z()) / dir.z(), 0.0);
  const double far = (s.z_max - origin.z()) / dir.z();
  if (far <= lo) return std::nullopt;
  const auto g = [&](double lambda, double* slope) {
    const Vec3 p = origin + lambda * dir;
    Vec2 grad;
    const double z = surfaceAt(p.x(), p.y(), &grad);
    if (slope) *slope = dir.z() - grad.dot(dir.head<2>());
    return p.z() - z;
  };
  if (g(lo, nullptr) > 0.0) return std::nullopt;

  // First crossing: march, then refine inside the first bracketing step.
  double hi = far;
  for (int i = 1; i <= kRaySteps; ++i) {
    const double lambda = lo + (far - lo) * i / kRaySteps;
    if (g(lambda, nullptr) >= 0.0) {
      hi = lambda;
      break;
    }
    if (i == kRaySteps) return std::nullopt;
    lo = lambda;
  }
  double slope = 0.0;
  double lambda = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double v = g(lambda, &slope);
    if (v == 0.0) break;
    (v < 0.0 ? lo : hi) = lambda;
    double next = lambda - v / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - lambda) <= 1e-15 * std::max(1.0, lambda)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return origin + lambda * dir;
}

std::optional<Vec3> Simulator::backProject(const Vec2& p, const FrameStamp& frame,
                                           ProjectOptions opt) const {
  const double t = rowTime(frame, p.y());
  const Vec2 q = opt.ois ? Vec2(p - oisShift(t)) : p;
  const Vec3 ray_cam = config_.camera.intrinsics.inverseMatrix() * q.homogeneous();
  const Vec3 dir = orientation(t).conjugate() * ray_cam;
  return raycast(opt.translation ? position(t) : Vec3::Zero(), dir);
}

Mat3 Simulator::relativeRotation(double ta, double tb) const {
  return (orientation(tb) * orientation(ta).conjugate()).toRotationMatrix();
}

HomographyArray Simulator::truePatchHomographies(const FrameStamp& a, const FrameStamp& b) const {
  const auto& cam = config_.camera;
  HomographyArray arr;
  arr.frame_height = cam.height;
  for (int i = 0; i < cam.timing.n_patches; ++i) {
    const double off = cam.timing.readout_s * i / cam.timing.n_patches;
    const Mat3 r = relativeRotation(nsToSeconds(a.t_start_ns) + off, nsToSeconds(b.t_start_ns) + off);
    arr.patches.emplace_back(cam.intrinsics.matrix() * r * cam.intrinsics.inverseMatrix());
  }
  return arr;
}

HomographyArray Simulator::observedPatchHomographies(const FrameStamp& a, const FrameStamp& b) const {
  const auto& cam = config_.camera;
  HomographyArray arr = truePatchHomographies(a, b);
  for (int i = 0; i < cam.timing.n_patches; ++i) {
    const double off = cam.timing.readout_s * i / cam.timing.n_patches;
    const Vec2 sa = oisShift(nsToSeconds(a.t_start_ns) + off);
    const Vec2 sb = oisShift(nsToSeconds(b.t_start_ns) + off);
    const Mat3 h = Homography::translation(sb.x(), sb.y()).matrix() * arr.patches[i].matrix() *
                   Homography::translation(-sa.x(), -sa.y()).matrix();
    arr.patches[i] = Homography(h);
  }
  return arr;
}

FlowField Simulator::rotationFlow(const FrameStamp& a, const FrameStamp& b, int jobs) const {
  const auto& cam = config_.camera;
  const int n = cam.timing.n_patches;
  std::vector<Mat3> rotations;
  for (int i = 0; i < n; ++i) {
    const double off = cam.timing.readout_s * i / n;
    rotations.push_back(relativeRotation(nsToSeconds(a.t_start_ns) + off, nsToSeconds(b.t_start_ns) + off));
  }
  const Mat3 k = cam.intrinsics.matrix();
  const Mat3 kinv = cam.intrinsics.inverseMatrix();
  FlowField flow(cam.width, cam.height);
  parallelFor(static_cast<std::size_t>(cam.height), jobs, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    const int patch = std::clamp(static_cast<int>(std::floor(static_cast<double>(y) * n / cam.height)), 0, n - 1);
    for (int x = 0; x < cam.width; ++x) {
      const Vec3 ray = kinv * Vec3(x, y, 1.0);
      const Vec3 q = k * (rotations[static_cast<std::size_t>(patch)] * ray);
      flow.set(x, y, q.head<2>() / q.z() - Vec2(x, y));
    }
  });
  return flow;
}

FlowField Simulator::fullFlow(const FrameStamp& a, const FrameStamp& b, int jobs,
                              ProjectOptions opt) const {
  const auto& cam = config_.camera;
  FlowField flow(cam.width, cam.height);
  parallelFor(static_cast<std::size_t>(cam.height), jobs, [&](std::size_t row) {
    const int y = static_cast<int>(row);
    for (int x = 0; x < cam.width; ++x) {
      const Vec2 p(x, y);
      const auto world = backProject(p, a, opt);
      const auto pb = world ? projectRs(*world, b, opt) : std::nullopt;
      if (!pb) {
        throw Error(ErrorKind::InvalidArgument, kModule,
                    "pixel (" + std::to_string(x) + ", " + std::to_string(y) +
                        ") does not see the scene in both frames");
      }
      flow.set(x, y, *pb - p);
    }
  });
  return flow;
}

std::vector<Correspondence> Simulator::sampleCorrespondences(const FrameStamp& a, const FrameStamp& b,
                                                             int count, std::uint64_t stream_seed,
                                                             ProjectOptions opt) const {
  const auto& cam = config_.camera;
  const double w = cam.width - 1;
  const double h = cam.height - 1;
  std::mt19937_64 rng(stream_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int cols = std::max(1, static_cast<int>(std::ceil(std::sqrt(count * w / h))));
  const int rows = (count + cols - 1) / cols;

  const auto tryPoint = [&](const Vec2& p1) -> std::optional<Correspondence> {
    const auto world = backProject(p1, a, opt);
    if (!world) return std::nullopt;
    const auto p2 = projectRs(*world, b, opt);
    if (!p2 || p2->x() < 0.0 || p2->y() < 0.0 || p2->x() > w || p2->y() > h) return std::nullopt;
    const auto seen = backProject(*p2, b, opt);  // occluded in frame b?
    if (!seen || (*seen - *world).norm() > 1e-6 * world->norm()) return std::nullopt;
    return Correspondence{p1, *p2};
  };

  std::vector<Correspondence> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    const int cx = c % cols;
    const int cy = c / cols;
    std::optional<Correspondence> hit;
    for (int attempt = 0; attempt < kPointAttempts && !hit; ++attempt) {
      hit = tryPoint(Vec2((cx + unit(rng)) * w / cols, (cy + unit(rng)) * h / rows));
    }
    for (int attempt = 0; attempt < kFallbackAttempts && !hit; ++attempt) {
      hit = tryPoint(Vec2(unit(rng) * w, unit(rng) * h));
    }
    if (!hit) {
      throw Error(ErrorKind::InvalidArgument, kModule,
                  "could not place a scene point visible in frames " + std::to_string(a.index) + " and " +
                      std::to_string(b.index) + " (regeneration budget exhausted)");
    }
    out.push_back(*hit);
  }
  return out;
}

FlowField SynthBundle::rotationFlow(std::size_t pair, int jobs) const {
  return sim->rotationFlow(frames[pairs.at(pair).a], frames[pairs.at(pair).b], jobs);
}

FlowField SynthBundle::fullFlow(std::size_t pair, int jobs) const {
  return sim->fullFlow(frames[pairs.at(pair).a], frames[pairs.at(pair).b], jobs);
}

HomographyArray SynthBundle::truePatchHomographies(std::size_t pair) const {
  return sim->truePatchHomographies(frames[pairs.at(pair).a], frames[pairs.at(pair).b]);
}

HomographyArray SynthBundle::observedPatchHomographies(std::size_t pair) const {
  return sim->observedPatchHomographies(frames[pairs.at(pair).a], frames[pairs.at(pair).b]);
}

SynthBundle simulateSequence(const SimConfig& config, int jobs) {
  SynthBundle bundle;
  bundle.config = config;
  auto sim = std::make_shared<const Simulator>(config);
  bundle.gyro = sim->gyroLog();
  bundle.frames = sim->frames();
  bundle.pairs.resize(bundle.frames.size() - 1);
  parallelFor(bundle.pairs.size(), jobs, [&](std::size_t k) {
    auto& pair = bundle.pairs[k];
    pair.a = k;
    pair.b = k + 1;
    const auto& fa = bundle.frames[k];
    const auto& fb = bundle.frames[k + 1];
    pair.corrs = sim->sampleCorrespondences(fa, fb, config.scene.points_per_pair,
                                            deriveSeed(config.seed, 1000 + 2 * k));
    pair.annotations = sim->sampleCorrespondences(fa, fb, config.scene.annotations_per_pair,
                                                  deriveSeed(config.seed, 1001 + 2 * k));
  });
  bundle.sim = std::move(sim);
  return bundle;
}

}  // namespace gyrocomp

#include "gyrocomp/gyro.hpp"

#include "gyrocomp/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "gyro";

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> splitFields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parseField(std::string_view field, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
    throw Error(ErrorKind::Parse, kModule,
                "line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::Parse, kModule, "line " + std::to_string(line_no) + ": non-finite value");
    }
  }
  return value;
}

bool skippable(std::string_view line) { return line.empty() || line.front() == '#'; }

}  // namespace

void RsTiming::validate() const {
  if (!(frame_period_s > 0.0) || !std::isfinite(frame_period_s)) {
    throw Error(ErrorKind::InvalidArgument, kModule, "frame period must be positive");
  }
  if (!(readout_s >= 0.0) || !(readout_s < frame_period_s)) {
    throw Error(ErrorKind::InvalidArgument, kModule,
                "readout time must satisfy 0 <= t_s < t_f");
  }
  if (n_patches < 1) throw Error(ErrorKind::InvalidArgument, kModule, "need at least one patch");
}

std::vector<GyroSample> parseGyroLog(std::istream& in) {
  std::vector<GyroSample> samples;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (skippable(line)) continue;
    const auto fields = splitFields(line);
    if (fields.size() != 4) {
      throw Error(ErrorKind::Parse, kModule,
                  "line " + std::to_string(line_no) + ": expected 4 fields, got " +
                      std::to_string(fields.size()));
    }
    GyroSample s;
    s.t_ns = parseField<std::int64_t>(fields[0], line_no);
    s.omega = Vec3(parseField<double>(fields[1], line_no), parseField<double>(fields[2], line_no),
                   parseField<double>(fields[3], line_no));
    if (!samples.empty() && s.t_ns <= samples.back().t_ns) {
      throw Error(ErrorKind::Ordering, kModule,
                  "line " + std::to_string(line_no) + ": timestamp " + std::to_string(s.t_ns) +
                      " does not increase");
    }
    samples.push_back(s);
  }
  return samples;
}

void writeGyroLog(std::span<const GyroSample> samples, std::ostream& out) {
  char buf[160];
  for (const auto& s : samples) {
    const int n = std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g\n",
                                static_cast<long long>(s.t_ns), s.omega.x(), s.omega.y(),
                                s.omega.z());
    out.write(buf, n);
  }
}

std::vector<FrameStamp> parseFrameStamps(std::istream& in) {
  std::vector<FrameStamp> frames;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (skippable(line)) continue;
    const auto fields = splitFields(line);
    if (fields.size() != 2) {
      throw Error(ErrorKind::Parse, kModule,
                  "frame stamps line " + std::to_string(line_no) + ": expected 2 fields");
    }
    FrameStamp f{parseField<std::int64_t>(fields[0], line_no),
                 parseField<std::int64_t>(fields[1], line_no)};
    if (!frames.empty() && (f.index <= frames.back().index || f.t_start_ns <= frames.back().t_start_ns)) {
      throw Error(ErrorKind::Ordering, kModule,
                  "frame stamps line " + std::to_string(line_no) + ": frames out of order");
    }
    frames.push_back(f);
  }
  return frames;
}

void writeFrameStamps(std::span<const FrameStamp> frames, std::ostream& out) {
  for (const auto& f : frames) out << f.index << ',' << f.t_start_ns << '\n';
}

std::pair<double, double> patchExposureTimes(const FrameStamp& frame, const RsTiming& timing,
                                             int patch) {
  timing.validate();
  if (patch < 0 || patch >= timing.n_patches) {
    throw Error(ErrorKind::OutOfRange, kModule,
                "patch index " + std::to_string(patch) + " outside [0, " +
                    std::to_string(timing.n_patches) + ")");
  }
  const double ta = nsToSeconds(frame.t_start_ns) + timing.readout_s * patch / timing.n_patches;
  return {ta, ta + timing.frame_period_s};
}

GyroLog::GyroLog(std::vector<GyroSample> samples, const Mat3& axis_map)
    : samples_(std::move(samples)) {
  if (samples_.empty()) throw Error(ErrorKind::NoData, kModule, "gyro log is empty");
  if (!axis_map.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "axis map has non-finite entries");
  }
  times_.reserve(samples_.size());
  rates_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (i > 0 && samples_[i].t_ns <= samples_[i - 1].t_ns) {
      throw Error(ErrorKind::Ordering, kModule, "gyro timestamps must strictly increase");
    }
    if (!samples_[i].omega.allFinite()) {
      throw Error(ErrorKind::InvalidArgument, kModule, "gyro sample has non-finite rate");
    }
    times_.push_back(nsToSeconds(samples_[i].t_ns));
    rates_.push_back(axis_map * samples_[i].omega);
  }
  if (times_.size() > 1) {
    std::vector<double> gaps(times_.size() - 1);
    for (std::size_t i = 1; i < times_.size(); ++i) gaps[i - 1] = times_[i] - times_[i - 1];
    std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
    period_ = gaps[gaps.size() / 2];
  }
}

std::size_t GyroLog::knotAtOrBefore(double t) const {
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  if (it == times_.begin()) return 0;
  return static_cast<std::size_t>(it - times_.begin()) - 1;
}

Vec3 GyroLog::rateAt(double t) const {
  if (t <= times_.front()) return rates_.front();
  if (t >= times_.back()) return rates_.back();
  const std::size_t k = knotAtOrBefore(t);
  const double a = (t - times_[k]) / (times_[k + 1] - times_[k]);
  return (1.0 - a) * rates_[k] + a * rates_[k + 1];
}

Rotation GyroLog::step(double from, double to) const {
  return rodrigues(rateAt(0.5 * (from + to)) * (to - from));
}

Rotation GyroLog::integrate(double t0, double t1) const {
  if (!std::isfinite(t0) || !std::isfinite(t1)) {
    throw Error(ErrorKind::InvalidArgument, kModule, "integration bounds must be finite");
  }
  if (t0 > t1) {
    throw Error(ErrorKind::InvalidInterval, kModule,
                "integration interval is reversed (t0 > t1)");
  }
  if (t0 == t1) return Rotation();

  const double max_gap = 2.0 * period_;
  if (period_ > 0.0 && (times_.front() - t0 > max_gap || t1 - times_.back() > max_gap)) {
    spdlog::warn("gyro: interval [{:.6f}, {:.6f}] s extends beyond the log [{:.6f}, {:.6f}] s; "
                 "holding the nearest sample",
                 t0, t1, times_.front(), times_.back());
  }

  // Orientation relative to the anchor knot; see class comment.
  const std::size_t anchor = knotAtOrBefore(t0);
  const std::size_t last = knotAtOrBefore(t1);
  const Rotation r0 = step(times_[anchor], t0);

  Rotation acc;
  for (std::size_t k = anchor + 1; k <= last; ++k) {
    if (period_ > 0.0 && times_[k] - times_[k - 1] > max_gap && times_[k] > t0) {
      spdlog::warn("gyro: {:.3f} ms gap in log at t = {:.6f} s", 1e3 * (times_[k] - times_[k - 1]),
                   times_[k - 1]);
    }
    acc = step(times_[k - 1], times_[k]) * acc;
    if (acc.orthonormalityError() > 1e-9) acc = Rotation::nearest(acc.matrix());
  }
  const Rotation r1 = step(times_[last], t1) * acc;
  Rotation out = r1 * r0.transpose();
  if (out.orthonormalityError() > 1e-9) out = Rotation::nearest(out.matrix());
  return out;
}

Rotation integrateRotation(std::span<const GyroSample> samples, double t0, double t1,
                           const Mat3& axis_map) {
  return GyroLog(std::vector<GyroSample>(samples.begin(), samples.end()), axis_map).integrate(t0, t1);
}

HomographyArray gyroHomographyArray(const GyroLog& log, const FrameStamp& frame_a,
                                    const FrameStamp& frame_b, const RsTiming& timing,
                                    const CameraIntrinsics& k, int frame_height) {
  timing.validate();
  k.validate();
  if (frame_b.index <= frame_a.index || frame_b.t_start_ns <= frame_a.t_start_ns) {
    throw Error(ErrorKind::InvalidArgument, kModule,
                "frame " + std::to_string(frame_b.index) + " does not follow frame " +
                    std::to_string(frame_a.index));
  }
  if (frame_height <= 0) throw Error(ErrorKind::InvalidArgument, kModule, "frame height must be positive");

  const Mat3 kmat = k.matrix();
  const Mat3 kinv = k.inverseMatrix();
  HomographyArray arr;
  arr.frame_height = frame_height;
  arr.patches.reserve(static_cast<std::size_t>(timing.n_patches));
  for (int i = 0; i < timing.n_patches; ++i) {
    const double offset = timing.readout_s * i / timing.n_patches;
    const double ta = nsToSeconds(frame_a.t_start_ns) + offset;
    const double tb = nsToSeconds(frame_b.t_start_ns) + offset;
    arr.patches.emplace_back(kmat * log.integrate(ta, tb).matrix() * kinv);
  }
  return arr;
}

FlowField gyroFlow(const GyroLog& log, const FrameStamp& frame_a, const FrameStamp& frame_b,
                   const RsTiming& timing, const CameraIntrinsics& k, int width, int height,
                   PatchBlend blend, int jobs) {
  return homographyArrayToFlow(gyroHomographyArray(log, frame_a, frame_b, timing, k, height), width,
                               height, blend, jobs);
}

}  // namespace gyrocomp

#include "gyrocomp/camera_config.hpp"

#include "gyrocomp/errors.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "camera";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double toDouble(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Parse, kModule, "bad numeric value for '" + key + "': " + value);
  }
}

int toInt(const std::string& key, const std::string& value) {
  const double v = toDouble(key, value);
  if (v != static_cast<double>(static_cast<int>(v))) {
    throw Error(ErrorKind::Parse, kModule, "'" + key + "' must be an integer, got " + value);
  }
  return static_cast<int>(v);
}

void assign(CameraConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "fx") cfg.intrinsics.fx = toDouble(key, value);
  else if (key == "fy") cfg.intrinsics.fy = toDouble(key, value);
  else if (key == "cx") cfg.intrinsics.cx = toDouble(key, value);
  else if (key == "cy") cfg.intrinsics.cy = toDouble(key, value);
  else if (key == "skew") cfg.intrinsics.skew = toDouble(key, value);
  else if (key == "t_s") cfg.timing.readout_s = toDouble(key, value);
  else if (key == "t_f") cfg.timing.frame_period_s = toDouble(key, value);
  else if (key == "n_patches") cfg.timing.n_patches = toInt(key, value);
  else if (key == "width") cfg.width = toInt(key, value);
  else if (key == "height") cfg.height = toInt(key, value);
  else throw Error(ErrorKind::Parse, kModule, "unknown camera key '" + key + "'");
}

}  // namespace

void CameraConfig::validate() const {
  intrinsics.validate();
  timing.validate();
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, kModule, "image size must be positive");
  }
}

CameraConfig parseCameraConfig(std::istream& in, CameraConfig base) {
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Parse, kModule, "line " + std::to_string(line_no) + ": expected key=value");
    }
    assign(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

CameraConfig loadCameraConfig(const std::filesystem::path& path, CameraConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, kModule, "cannot open camera config " + path.string());
  return parseCameraConfig(in, base);
}

void writeCameraConfig(const CameraConfig& cfg, std::ostream& out) {
  char buf[64];
  const auto num = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << key << '=' << buf << '\n';
  };
  num("fx", cfg.intrinsics.fx);
  num("fy", cfg.intrinsics.fy);
  num("cx", cfg.intrinsics.cx);
  num("cy", cfg.intrinsics.cy);
  num("skew", cfg.intrinsics.skew);
  num("t_s", cfg.timing.readout_s);
  num("t_f", cfg.timing.frame_period_s);
  out << "n_patches=" << cfg.timing.n_patches << '\n';
  out << "width=" << cfg.width << '\n';
  out << "height=" << cfg.height << '\n';
}

CameraConfig applyCameraOverrides(CameraConfig cfg, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) assign(cfg, key, value);
  cfg.validate();
  return cfg;
}

}  // namespace gyrocomp

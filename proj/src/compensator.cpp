#include "gyrocomp/compensator.hpp"

#include "gyrocomp/errors.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "compensator";
constexpr std::size_t kMinPairs = 4;
using nlohmann::json;

Mat3 normalizedMatrix(const Homography& h) {
  if (!h.normalized()) {
    throw Error(ErrorKind::DegenerateWarp, kModule, "homography with h22 = 0 cannot be normalized for fitting");
  }
  return h.matrix();
}

Vec2 displacement(const Mat3& h, const Vec2& p) {
  const Vec3 q = h * p.homogeneous();
  if (std::abs(q.z()) <= 1e-12) {
    throw Error(ErrorKind::DegenerateWarp, kModule, "image centre maps to infinity");
  }
  return q.head<2>() / q.z() - p;
}

}  // namespace

PatchCorrection PatchCorrection::identity(int n_patches) {
  PatchCorrection c;
  c.mats.assign(static_cast<std::size_t>(n_patches), Mat3::Identity());
  return c;
}

void PatchCorrection::validate() const {
  if (mats.empty()) throw Error(ErrorKind::InvalidArgument, kModule, "correction has no patches");
  if (!bias.allFinite()) throw Error(ErrorKind::InvalidArgument, kModule, "bias is not finite");
  for (std::size_t i = 0; i < mats.size(); ++i) {
    if (!mats[i].allFinite()) {
      throw Error(ErrorKind::InvalidArgument, kModule, "C_" + std::to_string(i) + " is not finite");
    }
    const double scale = mats[i].cwiseAbs().maxCoeff();
    if (std::abs(mats[i].determinant()) <= 1e-12 * scale * scale * scale) {
      throw Error(ErrorKind::DegenerateWarp, kModule, "C_" + std::to_string(i) + " is not invertible");
    }
  }
}

PatchCorrection fitCorrection(std::span<const CorrectionPair> pairs, const Vec2& image_center) {
  if (pairs.size() < kMinPairs) {
    throw Error(ErrorKind::InvalidArgument, kModule,
                "need at least " + std::to_string(kMinPairs) + " pairs to fit, got " + std::to_string(pairs.size()));
  }
  const std::size_t n = pairs.front().gyro.size();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, kModule, "homography arrays are empty");
  for (const auto& p : pairs) {
    if (p.gyro.size() != n || p.gt.size() != n) {
      throw Error(ErrorKind::InvalidArgument, kModule,
                  "all arrays must have " + std::to_string(n) + " patches");
    }
  }

  // The objective is evaluated in coordinates centred on the image centre
  // and scaled to unit size. In raw pixels the translation column is
  // hundreds of times larger than the linear part and dominates the fit.
  const double s = 1.0 / std::max({std::abs(image_center.x()), std::abs(image_center.y()), 1.0});
  Mat3 cond;
  cond << s, 0.0, -s * image_center.x(), 0.0, s, -s * image_center.y(), 0.0, 0.0, 1.0;
  const Mat3 cond_inv = cond.inverse();

  PatchCorrection c;
  c.mats.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Each pair only fixes C G up to scale once both sides are normalized,
    // so the target scale is left free: the residual of vec(C G) is taken
    // orthogonal to vec(T). With vec(C G) = M vec(C) this is a quadratic
    // form in vec(C), minimized under C(2,2) = 1.
    Eigen::Matrix<double, 9, 9> normal = Eigen::Matrix<double, 9, 9>::Zero();
    for (const auto& p : pairs) {
      const Mat3 g = cond * normalizedMatrix(p.gyro.patches[i]) * cond_inv;
      const Mat3 t = cond * normalizedMatrix(p.gt.patches[i]) * cond_inv;
      Eigen::Matrix<double, 9, 9> m = Eigen::Matrix<double, 9, 9>::Zero();
      for (int r = 0; r < 3; ++r) {
        for (int col = 0; col < 3; ++col) {
          for (int j = 0; j < 3; ++j) m(r + 3 * col, r + 3 * j) = g(j, col);
        }
      }
      const Eigen::Matrix<double, 9, 1> u = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(t.data()).normalized();
      const Eigen::Matrix<double, 9, 9> proj = Eigen::Matrix<double, 9, 9>::Identity() - u * u.transpose();
      normal += m.transpose() * proj * m;
    }
    const Eigen::Matrix<double, 8, 8> free = normal.topLeftCorner<8, 8>();
    const Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(free);
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
      throw Error(ErrorKind::DegenerateWarp, kModule,
                  "patch " + std::to_string(i) + ": gyro homographies do not determine a correction");
    }
    Eigen::Matrix<double, 9, 1> v;
    v.head<8>() = lu.solve(-normal.topRightCorner<8, 1>());
    v[8] = 1.0;
    const Mat3 ci = cond_inv * Eigen::Map<const Mat3>(v.data()) * cond;
    c.mats[i] = ci / ci(2, 2);
  }

  c.bias.setZero();
  for (const auto& p : pairs) {
    const int patch = p.gyro.patchForRow(image_center.y());
    const auto k = static_cast<std::size_t>(patch);
    const Vec2 want = displacement(normalizedMatrix(p.gt.patches[k]), image_center);
    const Vec2 have = displacement(c.mats[k] * normalizedMatrix(p.gyro.patches[k]), image_center);
    c.bias += want - have;
  }
  c.bias /= static_cast<double>(pairs.size());
  c.validate();
  return c;
}

HomographyArray correctHomographies(const PatchCorrection& c, const HomographyArray& gyro) {
  if (static_cast<std::size_t>(c.nPatches()) != gyro.size()) {
    throw Error(ErrorKind::Dimension, kModule,
                "correction has " + std::to_string(c.nPatches()) + " patches, gyro array has " +
                    std::to_string(gyro.size()));
  }
  HomographyArray out;
  out.frame_height = gyro.frame_height;
  for (std::size_t i = 0; i < gyro.size(); ++i) {
    out.patches.emplace_back(c.mats[i] * gyro.patches[i].matrix());
  }
  return out;
}

FlowField applyCorrection(const PatchCorrection& c, const HomographyArray& gyro, int width, int height,
                          PatchBlend blend, int jobs) {
  c.validate();
  FlowField flow = homographyArrayToFlow(correctHomographies(c, gyro), width, height, blend, jobs);
  if (c.bias.x() != 0.0 || c.bias.y() != 0.0) {
    auto data = flow.data();
    for (std::size_t k = 0; k < data.size(); k += 2) {
      data[k] += c.bias.x();
      data[k + 1] += c.bias.y();
    }
  }
  return flow;
}

std::string correctionToJson(const PatchCorrection& c) {
  json j;
  j["n_patches"] = c.nPatches();
  j["mats"] = json::array();
  for (const auto& m : c.mats) {
    json row = json::array();
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) row.push_back(m(r, col));
    }
    j["mats"].push_back(std::move(row));
  }
  j["bias"] = {c.bias.x(), c.bias.y()};
  return j.dump(2) + "\n";
}

PatchCorrection parseCorrection(const std::string& text) {
  PatchCorrection c;
  try {
    const json j = json::parse(text);
    const int n = j.at("n_patches").get<int>();
    const auto& mats = j.at("mats");
    if (n < 1 || !mats.is_array() || mats.size() != static_cast<std::size_t>(n)) {
      throw Error(ErrorKind::Parse, kModule, "'mats' must hold n_patches entries");
    }
    for (const auto& m : mats) {
      if (!m.is_array() || m.size() != 9) throw Error(ErrorKind::Parse, kModule, "each matrix needs 9 values");
      Mat3 mat;
      for (int k = 0; k < 9; ++k) mat(k / 3, k % 3) = m[static_cast<std::size_t>(k)].get<double>();
      c.mats.push_back(mat);
    }
    const auto& bias = j.at("bias");
    if (!bias.is_array() || bias.size() != 2) throw Error(ErrorKind::Parse, kModule, "'bias' must be [u, v]");
    c.bias = Vec2(bias[0].get<double>(), bias[1].get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, kModule, std::string("invalid correction JSON: ") + e.what());
  }
  c.validate();
  return c;
}

PatchCorrection loadCorrection(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parseCorrection(ss.str());
}

void saveCorrection(const PatchCorrection& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
  out << correctionToJson(c);
  if (!out) throw Error(ErrorKind::Io, kModule, "write failed for " + path.string());
}

}  // namespace gyrocomp

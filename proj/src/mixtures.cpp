#include "gyrocomp/mixtures.hpp"

#include "gyrocomp/errors.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "mixtures";
constexpr int kMinPatchPoints = 8;

void checkPatchSetup(int n_patches, double frame_height, double sigma) {
  if (n_patches < 1) throw Error(ErrorKind::InvalidArgument, kModule, "need at least one patch");
  if (!(frame_height > 0.0)) throw Error(ErrorKind::InvalidArgument, kModule, "frame height must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorKind::InvalidArgument, kModule, "sigma must be positive");
  }
}

// Similarity taking the points' centroid to the origin and their mean
// distance from it to sqrt(2).
Mat3 conditioningTransform(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 t;
  t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  return t;
}

Vec2 applyAffine(const Mat3& t, const Vec2& p) { return (t * p.homogeneous()).head<2>(); }

// Rows use `dlt` points for the coefficients and `weight_at` (the original
// frame-a pixels) for the mixture weights and patch membership.
Eigen::MatrixXd assembleRows(std::span<const Correspondence> dlt, std::span<const Vec2> weight_at,
                             int n_patches, double frame_height, double sigma, double lambda) {
  if (dlt.empty()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "no correspondences to assemble");
  }
  checkPatchSetup(n_patches, frame_height, sigma);

  std::vector<int> owned(static_cast<std::size_t>(n_patches), 0);
  for (const auto& p : weight_at) ++owned[dominantPatch(p, n_patches, frame_height, sigma)];

  std::vector<int> tied;
  if (n_patches > 1) {
    for (int i = 0; i < n_patches; ++i) {
      if (owned[i] < kMinPatchPoints) tied.push_back(i);
    }
  }

  const Eigen::Index cols = 9 * n_patches;
  const Eigen::Index data_rows = static_cast<Eigen::Index>(dlt.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(data_rows + 9 * static_cast<Eigen::Index>(tied.size()), cols);
  for (Eigen::Index j = 0; j < data_rows; ++j) {
    const auto row = dltRow(dlt[j]);
    const Eigen::VectorXd w = mixtureWeights(weight_at[j], n_patches, frame_height, sigma);
    for (int i = 0; i < n_patches; ++i) a.block<1, 9>(j, 9 * i) = w[i] * row;
  }
  Eigen::Index r = data_rows;
  for (const int i : tied) {
    const int neighbour = i == 0 ? 1 : i - 1;
    a.block<9, 9>(r, 9 * i) = lambda * Eigen::Matrix<double, 9, 9>::Identity();
    a.block<9, 9>(r, 9 * neighbour) = -lambda * Eigen::Matrix<double, 9, 9>::Identity();
    r += 9;
  }
  if (!tied.empty()) {
    spdlog::debug("mixtures: {} of {} patches own fewer than {} points; tied to neighbours",
                  tied.size(), n_patches, kMinPatchPoints);
  }
  return a;
}

Mat3 rankTwo(const Mat3& f) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = svd.singularValues();
  s[2] = 0.0;
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

// Joint unit norm, largest-magnitude entry positive.
void canonicalize(std::vector<Mat3>& mats) {
  double norm2 = 0.0;
  double largest = 0.0;
  for (const auto& m : mats) {
    norm2 += m.squaredNorm();
    for (int k = 0; k < 9; ++k) {
      if (std::abs(m(k)) > std::abs(largest)) largest = m(k);
    }
  }
  const double scale = (largest < 0.0 ? -1.0 : 1.0) / std::sqrt(norm2);
  for (auto& m : mats) m *= scale;
}

std::string_view trimView(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

Eigen::VectorXd FundamentalMixture::stacked() const {
  Eigen::VectorXd f(9 * static_cast<Eigen::Index>(mats.size()));
  for (std::size_t i = 0; i < mats.size(); ++i) {
    f.segment<9>(9 * static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(mats[i].data());
  }
  return f;
}

std::vector<Correspondence> parseCorrespondences(std::istream& in) {
  std::vector<Correspondence> cs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trimView(line);
    if (view.empty() || view.front() == '#') continue;
    std::string text(view);
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream fields(text);
    double v[4];
    std::string extra;
    if (!(fields >> v[0] >> v[1] >> v[2] >> v[3]) || (fields >> extra)) {
      throw Error(ErrorKind::Parse, kModule,
                  "correspondence line " + std::to_string(line_no) + ": expected x1,y1,x2,y2");
    }
    Correspondence c{Vec2(v[0], v[1]), Vec2(v[2], v[3])};
    if (!c.p1.allFinite() || !c.p2.allFinite()) {
      throw Error(ErrorKind::Parse, kModule, "correspondence line " + std::to_string(line_no) + ": non-finite value");
    }
    cs.push_back(c);
  }
  return cs;
}

void writeCorrespondences(std::span<const Correspondence> cs, std::ostream& out) {
  char buf[128];
  for (const auto& c : cs) {
    const int n = std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", c.p1.x(), c.p1.y(),
                                c.p2.x(), c.p2.y());
    out.write(buf, n);
  }
}

Eigen::VectorXd mixtureWeights(const Vec2& p, int n_patches, double frame_height, double sigma) {
  checkPatchSetup(n_patches, frame_height, sigma);
  if (!(p.y() >= 0.0) || !(p.y() < frame_height)) {
    throw Error(ErrorKind::OutOfRange, kModule,
                "row " + std::to_string(p.y()) + " outside [0, " + std::to_string(frame_height) + ")");
  }
  Eigen::VectorXd expo(n_patches);
  for (int i = 0; i < n_patches; ++i) {
    const double c = (i + 0.5) * frame_height / n_patches;
    const double d = (p.y() - c) / sigma;
    expo[i] = -0.5 * d * d;
  }
  const double top = expo.maxCoeff();
  Eigen::VectorXd w = (expo.array() - top).exp().matrix();
  return w / w.sum();
}

int dominantPatch(const Vec2& p, int n_patches, double frame_height, double sigma) {
  Eigen::Index best = 0;
  mixtureWeights(p, n_patches, frame_height, sigma).maxCoeff(&best);
  return static_cast<int>(best);
}

Eigen::Matrix<double, 1, 9> dltRow(const Correspondence& c) {
  const double x = c.p1.x(), y = c.p1.y();
  const double xp = c.p2.x(), yp = c.p2.y();
  Eigen::Matrix<double, 1, 9> row;
  row << xp * x, xp * y, xp, yp * x, yp * y, yp, x, y, 1.0;
  return row;
}

Eigen::MatrixXd assembleMixtureSystem(std::span<const Correspondence> cs, int n_patches,
                                      double frame_height, double sigma, double lambda) {
  std::vector<Vec2> at;
  at.reserve(cs.size());
  for (const auto& c : cs) at.push_back(c.p1);
  return assembleRows(cs, at, n_patches, frame_height, sigma, lambda);
}

FundamentalMixture solveMixture(const Eigen::MatrixXd& a, int n_patches, double frame_height,
                                double sigma) {
  checkPatchSetup(n_patches, frame_height, sigma);
  const Eigen::Index cols = 9 * n_patches;
  if (a.cols() != cols) {
    throw Error(ErrorKind::Dimension, kModule,
                "system has " + std::to_string(a.cols()) + " columns, expected " + std::to_string(cols));
  }
  if (a.rows() < cols - 1) {
    throw Error(ErrorKind::AmbiguousSolution, kModule,
                "rank deficient: " + std::to_string(a.rows()) + " rows for " + std::to_string(cols) +
                    " unknowns (need at least " + std::to_string(cols - 1) + ")");
  }
  if (!a.allFinite()) throw Error(ErrorKind::InvalidArgument, kModule, "system has non-finite entries");

  // The right singular vectors of A equal those of its R factor; reducing
  // first keeps the SVD at 9N x 9N for tall systems.
  Eigen::MatrixXd reduced;
  if (a.rows() > cols) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    reduced = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
  } else {
    reduced = Eigen::MatrixXd::Zero(cols, cols);
    reduced.topRows(a.rows()) = a;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(reduced, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double largest = s[0];
  const double second = s[cols - 2];
  const double smallest = s[cols - 1];
  if (!(largest > 0.0) || second < 1e-10 * largest) {
    throw Error(ErrorKind::AmbiguousSolution, kModule,
                "null space is not one-dimensional (second smallest singular value " +
                    std::to_string(second) + ", largest " + std::to_string(largest) + ")");
  }
  if (smallest > 0.0 && second / smallest < 1e3) {
    spdlog::warn("mixtures: weak null space (sigma_n-1 / sigma_n = {:.3g}); little translation in "
                 "the data makes the fundamental matrices ill-defined",
                 second / smallest);
  }

  const Eigen::VectorXd f = svd.matrixV().col(cols - 1);
  FundamentalMixture fm;
  fm.n_patches = n_patches;
  fm.frame_height = frame_height;
  fm.sigma = sigma;
  fm.mats.reserve(static_cast<std::size_t>(n_patches));
  for (int i = 0; i < n_patches; ++i) {
    const Mat3 fi = Eigen::Map<const Mat3>(f.data() + 9 * i);  // column-stacked
    fm.mats.push_back(rankTwo(fi));
  }
  canonicalize(fm.mats);
  return fm;
}

FundamentalMixture estimateMixture(std::span<const Correspondence> cs, double frame_height,
                                   const MixtureOptions& options) {
  if (cs.empty()) throw Error(ErrorKind::InvalidArgument, kModule, "no correspondences");
  const double sigma = options.sigma > 0.0 ? options.sigma : defaultMixtureSigma(frame_height);

  std::vector<Vec2> p1s, p2s;
  p1s.reserve(cs.size());
  p2s.reserve(cs.size());
  for (const auto& c : cs) {
    p1s.push_back(c.p1);
    p2s.push_back(c.p2);
  }
  Mat3 t1 = Mat3::Identity();
  Mat3 t2 = Mat3::Identity();
  if (options.normalize_points) {
    t1 = conditioningTransform(p1s);
    t2 = conditioningTransform(p2s);
  }
  std::vector<Correspondence> conditioned;
  conditioned.reserve(cs.size());
  for (const auto& c : cs) conditioned.push_back({applyAffine(t1, c.p1), applyAffine(t2, c.p2)});

  Eigen::MatrixXd a = assembleRows(conditioned, p1s, options.n_patches, frame_height, sigma, options.lambda);
  if (options.n_patches > 1 && options.scale_tie > 0.0) {
    // Any per-patch rescaling of an epipolar-consistent solution leaves the
    // data rows at zero, so on its own the system pins only the direction of
    // each F_i. Weak ties between all neighbours fix the relative scales.
    const Eigen::Index data_rows = a.rows();
    const int ties = options.n_patches - 1;
    a.conservativeResize(data_rows + 9 * ties, Eigen::NoChange);
    a.bottomRows(9 * ties).setZero();
    const auto eye = Eigen::Matrix<double, 9, 9>::Identity();
    for (int i = 1; i <= ties; ++i) {
      const Eigen::Index r = data_rows + 9 * (i - 1);
      a.block<9, 9>(r, 9 * i) = options.scale_tie * eye;
      a.block<9, 9>(r, 9 * (i - 1)) = -options.scale_tie * eye;
    }
  }
  FundamentalMixture fm = solveMixture(a, options.n_patches, frame_height, sigma);
  if (options.normalize_points) {
    // p1' F p2 = q1' (T1^-T F T2^-1) q2 with q = T p
    for (auto& f : fm.mats) f = t1.transpose() * f * t2;
    canonicalize(fm.mats);
  }
  return fm;
}

Mat3 evaluateMixtureAt(const FundamentalMixture& fm, const Vec2& p) {
  const Eigen::VectorXd w = mixtureWeights(p, fm.n_patches, fm.frame_height, fm.sigma);
  Mat3 f = Mat3::Zero();
  for (int i = 0; i < fm.n_patches; ++i) f += w[i] * fm.mats[static_cast<std::size_t>(i)];
  return f;
}

Mat3 essentialFromFundamental(const Mat3& f, const CameraIntrinsics& k, bool* degenerate) {
  k.validate();
  const Mat3 e = k.matrix().transpose() * f * k.matrix();
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double s = 0.5 * (svd.singularValues()[0] + svd.singularValues()[1]);
  if (degenerate) *degenerate = !(s > 0.0);
  if (!(s > 0.0)) return Mat3::Zero();
  return svd.matrixU() * Eigen::Vector3d(s, s, 0.0).asDiagonal() * svd.matrixV().transpose();
}

Rotation rotationFromEssential(const Mat3& e, std::span<const Correspondence> cs,
                               const CameraIntrinsics& k) {
  k.validate();
  if (cs.empty()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "cheirality test needs correspondences");
  }
  if (!e.allFinite() || e.norm() == 0.0) {
    throw Error(ErrorKind::InvalidArgument, kModule, "degenerate essential matrix");
  }
  // With x2 = R x1 + t the usual constraint is n2' [t]x R n1 = 0, i.e. the
  // transpose of the p1' E p2 form used here.
  Eigen::JacobiSVD<Mat3> svd(e.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0) u = -u;
  if (v.determinant() < 0) v = -v;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 ra = u * w * v.transpose();
  const Mat3 rb = u * w.transpose() * v.transpose();
  const Vec3 t = u.col(2);

  const Mat3 kinv = k.inverseMatrix();
  std::vector<Vec3> rays1, rays2;
  rays1.reserve(cs.size());
  rays2.reserve(cs.size());
  for (const auto& c : cs) {
    rays1.push_back(kinv * c.p1.homogeneous());
    rays2.push_back(kinv * c.p2.homogeneous());
  }

  struct Candidate {
    Mat3 r;
    Vec3 t;
  };
  const Candidate candidates[4] = {{ra, t}, {ra, -t}, {rb, t}, {rb, -t}};
  int best = -1;
  std::size_t best_count = 0;
  for (int c = 0; c < 4; ++c) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < rays1.size(); ++j) {
      // depth2 * x2 = depth1 * R x1 + t, least squares in (depth1, depth2)
      Eigen::Matrix<double, 3, 2> m;
      m.col(0) = candidates[c].r * rays1[j];
      m.col(1) = -rays2[j];
      const Eigen::Vector2d depth = (m.transpose() * m).ldlt().solve(-m.transpose() * candidates[c].t);
      if (depth[0] > 0.0 && depth[1] > 0.0) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best = c;
    }
  }
  if (best < 0 || 2 * best_count <= cs.size()) {
    throw Error(ErrorKind::Cheirality, kModule,
                "no (R, t) candidate puts a majority of " + std::to_string(cs.size()) +
                    " points in front of both cameras (best " + std::to_string(best_count) + ")");
  }
  return Rotation::nearest(candidates[best].r);
}

HomographyArray mixtureRotationHomographies(const FundamentalMixture& fm,
                                            std::span<const Correspondence> cs,
                                            const CameraIntrinsics& k) {
  if (fm.mats.size() != static_cast<std::size_t>(fm.n_patches) || fm.n_patches < 1) {
    throw Error(ErrorKind::InvalidArgument, kModule, "mixture has inconsistent patch count");
  }
  if (cs.empty()) throw Error(ErrorKind::InvalidArgument, kModule, "no correspondences for cheirality");

  std::vector<std::vector<Correspondence>> owned(static_cast<std::size_t>(fm.n_patches));
  for (const auto& c : cs) {
    owned[dominantPatch(c.p1, fm.n_patches, fm.frame_height, fm.sigma)].push_back(c);
  }
  HomographyArray arr;
  arr.frame_height = static_cast<int>(std::lround(fm.frame_height));
  arr.patches.reserve(fm.mats.size());
  for (int i = 0; i < fm.n_patches; ++i) {
    const auto& mine = owned[static_cast<std::size_t>(i)];
    const std::span<const Correspondence> subset =
        mine.size() >= static_cast<std::size_t>(kMinPatchPoints) ? std::span<const Correspondence>(mine) : cs;
    bool degenerate = false;
    const Mat3 e = essentialFromFundamental(fm.mats[static_cast<std::size_t>(i)], k, &degenerate);
    if (degenerate) {
      throw Error(ErrorKind::InvalidArgument, kModule,
                  "patch " + std::to_string(i) + " has a degenerate fundamental matrix");
    }
    arr.patches.push_back(rotationToHomography(rotationFromEssential(e, subset, k), k));
  }
  return arr;
}

FlowField mixtureToGtFlow(const FundamentalMixture& fm, std::span<const Correspondence> cs,
                          const CameraIntrinsics& k, int width, int height, PatchBlend blend,
                          int jobs) {
  return homographyArrayToFlow(mixtureRotationHomographies(fm, cs, k), width, height, blend, jobs);
}

void writeMatrixBlocks(std::span<const Mat3> mats, std::ostream& out) {
  char buf[64];
  for (std::size_t b = 0; b < mats.size(); ++b) {
    if (b > 0) out << '\n';
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", mats[b](r, c));
        out << buf << (c < 2 ? ' ' : '\n');
      }
    }
  }
}

std::vector<Mat3> readMatrixBlocks(std::istream& in) {
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    const auto view = trimView(line);
    if (view.empty() || view.front() == '#') continue;
    std::istringstream fields{std::string(view)};
    double v;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) throw Error(ErrorKind::Parse, kModule, "bad number in matrix block file");
  }
  if (values.size() % 9 != 0) {
    throw Error(ErrorKind::Parse, kModule, "matrix block file holds " + std::to_string(values.size()) +
                                               " values, not a multiple of 9");
  }
  std::vector<Mat3> mats(values.size() / 9);
  for (std::size_t b = 0; b < mats.size(); ++b) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) mats[b](r, c) = values[9 * b + 3 * r + c];
    }
  }
  return mats;
}

void writeMixture(const FundamentalMixture& fm, std::ostream& out) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "# n_patches %d frame_height %.17g sigma %.17g\n", fm.n_patches,
                fm.frame_height, fm.sigma);
  out << buf;
  writeMatrixBlocks(fm.mats, out);
}

void writeHomographyArray(const HomographyArray& arr, std::ostream& out) {
  out << "# frame_height " << arr.frame_height << '\n';
  std::vector<Mat3> mats;
  mats.reserve(arr.size());
  for (const auto& h : arr.patches) mats.push_back(h.matrix());
  writeMatrixBlocks(mats, out);
}

HomographyArray readHomographyArray(std::istream& in) {
  std::stringstream body;
  std::string line;
  int frame_height = 0;
  while (std::getline(in, line)) {
    int h = 0;
    if (std::sscanf(line.c_str(), " # frame_height %d", &h) == 1) frame_height = h;
    body << line << '\n';
  }
  if (frame_height <= 0) {
    throw Error(ErrorKind::Parse, kModule, "homography array file lacks a '# frame_height' header");
  }
  HomographyArray arr;
  arr.frame_height = frame_height;
  for (const auto& m : readMatrixBlocks(body)) arr.patches.emplace_back(m);
  arr.validate();
  return arr;
}

}  // namespace gyrocomp

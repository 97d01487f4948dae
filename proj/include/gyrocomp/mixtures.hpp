#pragma once

#include "gyrocomp/geometry.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <span>
#include <vector>

namespace gyrocomp {

/// A tracked point: p1 in frame a, p2 in frame b (pixels).
struct Correspondence {
  Vec2 p1 = Vec2::Zero();
  Vec2 p2 = Vec2::Zero();
};

/// CSV x1,y1,x2,y2 per line.
std::vector<Correspondence> parseCorrespondences(std::istream& in);
void writeCorrespondences(std::span<const Correspondence> cs, std::ostream& out);

/// N per-patch fundamental matrices estimated jointly. Matrices follow the
/// convention p1' F p2 = 0 (p1 in frame a). The stacked column-major vector
/// of all F_i has unit norm.
struct FundamentalMixture {
  std::vector<Mat3> mats;
  int n_patches = 1;
  double frame_height = 0.0;
  double sigma = 0.0;

  /// All F_i column-stacked into one 9N vector.
  Eigen::VectorXd stacked() const;
};

inline double defaultMixtureSigma(double frame_height) { return 0.001 * frame_height; }

/// Normalized Gaussian row weights: w_i ~ exp(-(y - c_i)^2 / (2 sigma^2)),
/// c_i = (i + 0.5) h / N, sum w_i = 1. Evaluated in log space so that tiny
/// sigma degrades to a one-hot assignment instead of 0/0.
Eigen::VectorXd mixtureWeights(const Vec2& p, int n_patches, double frame_height, double sigma);

/// Patch with the largest weight at p (ties go to the lower index).
int dominantPatch(const Vec2& p, int n_patches, double frame_height, double sigma);

/// (x'x, x'y, x', y'x, y'y, y', x, y, 1) with (x, y) = p1 and (x', y') = p2.
Eigen::Matrix<double, 1, 9> dltRow(const Correspondence& c);

/// Joint homogeneous system over the stacked 9N coefficient vector: one
/// weighted row per correspondence, then 9 tie rows lambda (f_i - f_{i-1})
/// for every patch that owns fewer than 8 correspondences (patch 0 ties to
/// patch 1).
Eigen::MatrixXd assembleMixtureSystem(std::span<const Correspondence> cs, int n_patches,
                                      double frame_height, double sigma, double lambda = 1.0);

/// Unit-norm null vector of `a` (smallest right singular vector), split into
/// N matrices, each projected to rank 2, renormalized jointly and signed so
/// that the largest-magnitude entry is positive.
///
/// Throws AmbiguousSolution when `a` has fewer than 9N - 1 rows or its second
/// smallest singular value is below 1e-10 times the largest.
FundamentalMixture solveMixture(const Eigen::MatrixXd& a, int n_patches, double frame_height,
                                double sigma);

struct MixtureOptions {
  int n_patches = 6;
  double sigma = 0.0;  // <= 0 selects defaultMixtureSigma(frame_height)
  double lambda = 1.0;
  /// Weight of the tie rows f_i - f_{i-1} added between every pair of
  /// neighbouring patches (conditioned coordinates); 0 disables them.
  double scale_tie = 0.01;
  bool normalize_points = true;  // Hartley conditioning of each frame's points
};

/// Full estimator: condition, assemble, solve, undo the conditioning.
FundamentalMixture estimateMixture(std::span<const Correspondence> cs, double frame_height,
                                   const MixtureOptions& options);

/// F(p) = sum_i w_i(p) F_i.
Mat3 evaluateMixtureAt(const FundamentalMixture& fm, const Vec2& p);

/// E = K' F K projected onto the essential manifold (singular values
/// (s, s, 0), s the mean of the two largest). `degenerate` is set when F
/// carries no epipolar information (s == 0).
Mat3 essentialFromFundamental(const Mat3& f, const CameraIntrinsics& k, bool* degenerate = nullptr);

/// Rotation of the (R, t) candidate that puts the most correspondences in
/// front of both cameras. E uses the p1' E p2 convention on normalized
/// coordinates; the result maps camera-a coordinates to camera-b
/// coordinates. Throws Cheirality when no candidate reaches a strict
/// majority.
Rotation rotationFromEssential(const Mat3& e, std::span<const Correspondence> cs,
                               const CameraIntrinsics& k);

/// Rotation-only homography per patch, K R_i K^-1. Cheirality for patch i
/// uses its own correspondences, or all of them when it owns fewer than 8.
HomographyArray mixtureRotationHomographies(const FundamentalMixture& fm,
                                            std::span<const Correspondence> cs,
                                            const CameraIntrinsics& k);

/// Fundamental Mixtures flow F_ab.
FlowField mixtureToGtFlow(const FundamentalMixture& fm, std::span<const Correspondence> cs,
                          const CameraIntrinsics& k, int width, int height,
                          PatchBlend blend = PatchBlend::Hard, int jobs = 1);

/// N blocks of 3x3 values, row-major, one row per line, blank line between
/// blocks. Lines starting with '#' are comments.
void writeMatrixBlocks(std::span<const Mat3> mats, std::ostream& out);
std::vector<Mat3> readMatrixBlocks(std::istream& in);

void writeMixture(const FundamentalMixture& fm, std::ostream& out);

/// Homography arrays use the block format with a "# frame_height H" header.
void writeHomographyArray(const HomographyArray& arr, std::ostream& out);
HomographyArray readHomographyArray(std::istream& in);

}  // namespace gyrocomp

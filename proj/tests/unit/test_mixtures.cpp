#include "gyrocomp/mixtures.hpp"
#include "gyrocomp/synth.hpp"

#include "test_util.hpp"

#include <cmath>
#include <sstream>

using namespace gyrocomp;
using namespace gyrocomp::testing;

namespace {

constexpr double kH = 270.0;

double unitCos(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::abs(a.dot(b)) / (a.norm() * b.norm());
}

Eigen::VectorXd flat(const Mat3& m) { return Eigen::Map<const Eigen::Matrix<double, 9, 1>>(m.data()); }

double epipolarResidual(const FundamentalMixture& fm, std::span<const Correspondence> cs) {
  double sum = 0.0;
  for (const auto& c : cs) sum += std::abs(c.p1.homogeneous().dot(evaluateMixtureAt(fm, c.p1) * c.p2.homogeneous()));
  return sum;
}

MixtureOptions single() {
  MixtureOptions o;
  o.n_patches = 1;
  return o;
}

SimConfig smallSequence(std::uint64_t seed) {
  SimConfig c;
  c.seed = seed;
  c.n_frames = 3;
  c.trajectory.translation_scale = 0.05;
  c.trajectory.translation_dir = Vec3(0, 0, 1);
  c.gyro_noise = 0.0;
  return c;
}

}  // namespace

TEST(MixtureWeights, SharpGaussianAtPatchCentre) {
  const double y = (3 + 0.5) * kH / 6;
  const Eigen::VectorXd w = mixtureWeights(Vec2(10, y), 6, kH, 0.001 * kH);
  EXPECT_NEAR(w[3], 1.0, 1e-12);
  for (int i = 0; i < 6; ++i) {
    if (i != 3) {
      EXPECT_LT(w[i], 1e-10);
    }
  }
}

TEST(MixtureWeights, SinglePatchAndSymmetry) {
  EXPECT_EQ(mixtureWeights(Vec2(3, 200), 1, kH, 0.27)[0], 1.0);
  const Eigen::VectorXd w = mixtureWeights(Vec2(0, 3 * kH / 6), 6, kH, 0.2 * kH);
  EXPECT_NEAR(w[2], w[3], 1e-12);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  EXPECT_TRUE((w.array() >= 0).all());
}

TEST(MixtureWeights, FarFromEveryCentreStillNormalized) {
  // Weights underflow with a sharp kernel here; normalization must survive.
  const Eigen::VectorXd w = mixtureWeights(Vec2(0, 0), 2, kH, 0.001 * kH);
  EXPECT_NEAR(w.sum(), 1.0, 1e-12);
  EXPECT_EQ(dominantPatch(Vec2(0, 0), 2, kH, 0.001 * kH), 0);
  EXPECT_EQ(dominantPatch(Vec2(0, kH - 1), 2, kH, 0.001 * kH), 1);
}

TEST(MixtureWeights, InvalidSigma) {
  EXPECT_EQ(errorKindOf([] { mixtureWeights(Vec2(0, 0), 6, kH, 0.0); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(errorKindOf([] { mixtureWeights(Vec2(0, 0), 6, kH, -1.0); }), ErrorKind::InvalidArgument);
}

TEST(DltRow, Examples) {
  using Row = Eigen::Matrix<double, 1, 9>;
  EXPECT_EQ(dltRow({Vec2(0, 0), Vec2(0, 0)}), (Row() << 0, 0, 0, 0, 0, 0, 0, 0, 1).finished());
  EXPECT_EQ(dltRow({Vec2(1, 2), Vec2(3, 4)}), (Row() << 3, 6, 3, 4, 8, 4, 1, 2, 1).finished());
  EXPECT_EQ(dltRow({Vec2(1, 0), Vec2(0, 1)}), (Row() << 0, 0, 0, 1, 0, 1, 1, 0, 1).finished());
}

TEST(DltRow, MatchesColumnStackedBilinearForm) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 10; ++i) {
    Mat3 f;
    for (int k = 0; k < 9; ++k) f(k) = n(rng);
    const Correspondence c{Vec2(n(rng), n(rng)), Vec2(n(rng), n(rng))};
    EXPECT_NEAR(dltRow(c).dot(flat(f)), c.p1.homogeneous().dot(f * c.p2.homogeneous()), 1e-12);
  }
}

TEST(AssembleMixtureSystem, RowCounts) {
  std::mt19937_64 rng(6);
  const auto cs = twoViewCorrespondences(rng, rodrigues(Vec3(0.01, 0.02, 0)), Vec3(0.1, 0, 0.02), synthK(), 8);
  const Eigen::MatrixXd a1 = assembleMixtureSystem(cs, 1, kH, 0.27);
  EXPECT_EQ(a1.rows(), 8);
  EXPECT_EQ(a1.cols(), 9);

  std::vector<Correspondence> top;
  for (int i = 0; i < 10; ++i) top.push_back({Vec2(10.0 * i, 5.0), Vec2(10.0 * i + 1, 6.0)});
  const Eigen::MatrixXd a6 = assembleMixtureSystem(top, 6, kH, 0.27);
  EXPECT_EQ(a6.rows(), 10 + 45);
  EXPECT_EQ(a6.cols(), 54);
  // regularizer block for patch 1 ties f_1 to f_0
  EXPECT_EQ(a6(10, 9), 1.0);
  EXPECT_EQ(a6(10, 0), -1.0);

  std::vector<Correspondence> split;
  for (int i = 0; i < 8; ++i) split.push_back({Vec2(10.0 * i, 20.0), Vec2(0, 0)});
  for (int i = 0; i < 8; ++i) split.push_back({Vec2(10.0 * i, 250.0), Vec2(0, 0)});
  EXPECT_EQ(assembleMixtureSystem(split, 2, kH, 0.27).rows(), 16);
}

TEST(AssembleMixtureSystem, LambdaScalesRegularizer) {
  std::vector<Correspondence> top;
  for (int i = 0; i < 10; ++i) top.push_back({Vec2(10.0 * i, 5.0), Vec2(10.0 * i + 1, 6.0)});
  const Eigen::MatrixXd a = assembleMixtureSystem(top, 2, kH, 0.27, 2.5);
  ASSERT_EQ(a.rows(), 19);
  EXPECT_EQ(a(10, 9), 2.5);
  EXPECT_EQ(a(10, 0), -2.5);
  EXPECT_EQ(errorKindOf([] { assembleMixtureSystem({}, 2, kH, 0.27); }), ErrorKind::InvalidArgument);
}

TEST(SolveMixture, EightPointRecovery) {
  std::mt19937_64 rng(7);
  const Rotation r = rodrigues(Vec3(0.02, -0.03, 0.01));
  const Vec3 t(0.2, 0.05, 0.1);
  const auto cs = twoViewCorrespondences(rng, r, t, synthK(), 8);
  const FundamentalMixture fm = estimateMixture(cs, kH, single());
  EXPECT_GT(unitCos(fm.stacked(), flat(fundamentalFor(r, t, synthK()))), 1 - 1e-9);
  EXPECT_NEAR(fm.stacked().norm(), 1.0, 1e-12);
}

TEST(SolveMixture, PerPatchRecoveryWithTwoPatches) {
  std::mt19937_64 rng(8);
  const Rotation r0 = rodrigues(Vec3(0.02, -0.03, 0.01));
  const Rotation r1 = rodrigues(Vec3(0.025, -0.028, 0.012));
  const Vec3 t0(0.2, 0.05, 0.1), t1(0.21, 0.04, 0.1);
  std::vector<Correspondence> cs;
  for (const auto& c : twoViewCorrespondences(rng, r0, t0, synthK(), 200)) {
    if (c.p1.y() < kH / 2) cs.push_back(c);
  }
  for (const auto& c : twoViewCorrespondences(rng, r1, t1, synthK(), 200)) {
    if (c.p1.y() >= kH / 2) cs.push_back(c);
  }
  MixtureOptions o;
  o.n_patches = 2;
  o.sigma = 0.001 * kH;
  o.scale_tie = 1e-4;  // pins the relative scale; its bias grows with the square of the weight
  const FundamentalMixture fm = estimateMixture(cs, kH, o);
  const double angle0 = std::acos(std::min(1.0, unitCos(flat(fm.mats[0]), flat(fundamentalFor(r0, t0, synthK())))));
  const double angle1 = std::acos(std::min(1.0, unitCos(flat(fm.mats[1]), flat(fundamentalFor(r1, t1, synthK())))));
  EXPECT_LT(angle0, 1e-6);
  EXPECT_LT(angle1, 1e-6);
}

TEST(SolveMixture, UnderdeterminedIsAmbiguous) {
  std::mt19937_64 rng(9);
  const auto cs = twoViewCorrespondences(rng, rodrigues(Vec3(0.02, 0, 0)), Vec3(0.2, 0, 0), synthK(), 7);
  EXPECT_EQ(errorKindOf([&] { estimateMixture(cs, kH, single()); }), ErrorKind::AmbiguousSolution);
  const Eigen::MatrixXd a = assembleMixtureSystem(cs, 1, kH, 0.27);
  EXPECT_EQ(errorKindOf([&] { solveMixture(a.topRows(5), 1, kH, 0.27); }), ErrorKind::AmbiguousSolution);
  EXPECT_EQ(errorKindOf([&] { solveMixture(a, 2, kH, 0.27); }), ErrorKind::Dimension);
}

TEST(SolveMixture, UnitNormAndRankTwo) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cs = twoViewCorrespondences(rng, randomRotation(rng, 0.05), 0.3 * randomUnit(rng), synthK(), 150);
    MixtureOptions o;
    o.sigma = 0.1 * kH;
    const FundamentalMixture fm = estimateMixture(cs, kH, o);
    EXPECT_NEAR(fm.stacked().norm(), 1.0, 1e-12);
    for (const auto& f : fm.mats) {
      Eigen::JacobiSVD<Mat3> svd(f);
      EXPECT_LT(svd.singularValues()[2], 1e-12 * svd.singularValues()[0]);
    }
  }
}

TEST(SolveMixture, EpipolarResidualOnExactData) {
  std::mt19937_64 rng(11);
  const auto cs = twoViewCorrespondences(rng, rodrigues(Vec3(0.01, 0.03, -0.02)), Vec3(-0.1, 0.2, 0.3), synthK(), 100);
  for (int n : {1, 6}) {
    MixtureOptions o;
    o.n_patches = n;
    o.sigma = 0.1 * kH;
    EXPECT_LT(epipolarResidual(estimateMixture(cs, kH, o), cs), 1e-8) << "N = " << n;
  }
}

TEST(SolveMixture, EmptyPatchFollowsNeighbour) {
  std::mt19937_64 rng(12);
  std::vector<Correspondence> cs;
  for (const auto& c : twoViewCorrespondences(rng, rodrigues(Vec3(0.02, 0.01, 0)), Vec3(0.2, 0.1, 0.05), synthK(), 200)) {
    if (c.p1.y() < 2 * kH / 3) cs.push_back(c);
  }
  MixtureOptions o;
  o.n_patches = 3;
  o.sigma = 0.001 * kH;
  const FundamentalMixture fm = estimateMixture(cs, kH, o);
  EXPECT_LT(relFrobenius(fm.mats[2], fm.mats[1]), 1e-6);
}

TEST(SolveMixture, ScaleInvariance) {
  std::mt19937_64 rng(13);
  const auto cs = twoViewCorrespondences(rng, rodrigues(Vec3(0.02, -0.01, 0.03)), Vec3(0.2, -0.1, 0.3), synthK(), 100);
  const double s = 3.0;
  std::vector<Correspondence> scaled;
  for (const auto& c : cs) scaled.push_back({s * c.p1, s * c.p2});
  MixtureOptions o;
  o.sigma = 0.1 * kH;
  const FundamentalMixture a = estimateMixture(cs, kH, o);
  o.sigma = 0.1 * kH * s;
  const FundamentalMixture b = estimateMixture(scaled, kH * s, o);
  // p = S^-1 q, so F in scaled pixels is S^-1 F S^-1.
  const Mat3 sinv = Eigen::Vector3d(1 / s, 1 / s, 1).asDiagonal();
  Eigen::VectorXd mapped(a.stacked().size());
  for (int i = 0; i < 6; ++i) mapped.segment<9>(9 * i) = flat(sinv * a.mats[static_cast<std::size_t>(i)] * sinv);
  EXPECT_GT(unitCos(mapped, b.stacked()), 1 - 1e-8);

  CameraIntrinsics ks = synthK();
  ks.fx *= s;
  ks.fy *= s;
  ks.cx *= s;
  ks.cy *= s;
  const auto ha = mixtureRotationHomographies(a, cs, synthK());
  const auto hb = mixtureRotationHomographies(b, scaled, ks);
  for (std::size_t i = 0; i < 6; ++i) {
    const Mat3 ra = synthK().inverseMatrix() * ha.patches[i].matrix() * synthK().matrix();
    const Mat3 rb = ks.inverseMatrix() * hb.patches[i].matrix() * ks.matrix();
    EXPECT_LT((ra - rb).norm(), 1e-8);
  }
}

TEST(EvaluateMixtureAt, BlendsPatches) {
  FundamentalMixture fm;
  fm.n_patches = 2;
  fm.frame_height = kH;
  fm.sigma = 0.2 * kH;
  fm.mats = {Mat3::Identity(), 3 * Mat3::Identity()};
  EXPECT_LT((evaluateMixtureAt(fm, Vec2(5, kH / 2)) - 2 * Mat3::Identity()).norm(), 1e-12);
  fm.sigma = 0.001 * kH;
  EXPECT_LT((evaluateMixtureAt(fm, Vec2(5, 3 * kH / 4)) - fm.mats[1]).norm(), 1e-10);
  fm.n_patches = 1;
  fm.mats = {fm.mats[1]};
  EXPECT_EQ(evaluateMixtureAt(fm, Vec2(1, 2)), fm.mats[0]);
}

TEST(EssentialFromFundamental, ZeroIsDegenerate) {
  bool degenerate = false;
  EXPECT_EQ(essentialFromFundamental(Mat3::Zero(), synthK(), &degenerate), Mat3::Zero());
  EXPECT_TRUE(degenerate);
}

TEST(EssentialFromFundamental, ProjectsToEssentialManifold) {
  std::mt19937_64 rng(14);
  const Mat3 f = fundamentalFor(randomRotation(rng, 0.3), randomUnit(rng), synthK());
  bool degenerate = true;
  const Mat3 e = essentialFromFundamental(f, synthK(), &degenerate);
  EXPECT_FALSE(degenerate);
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Mat3>(e).singularValues();
  EXPECT_NEAR(sv[0], sv[1], 1e-12 * sv[0]);
  EXPECT_LT(sv[2], 1e-12 * sv[0]);

  Mat3 noisy = Mat3::Identity();
  noisy(0, 1) = 0.3;
  const CameraIntrinsics unit{1, 1, 0, 0, 0};
  const Eigen::Vector3d s2 = Eigen::JacobiSVD<Mat3>(essentialFromFundamental(noisy, unit)).singularValues();
  const Eigen::Vector3d s1 = Eigen::JacobiSVD<Mat3>(noisy).singularValues();
  EXPECT_NEAR(s2[0], 0.5 * (s1[0] + s1[1]), 1e-12);
}

TEST(RotationFromEssential, RecoversRotation) {
  std::mt19937_64 rng(15);
  const Rotation r = rodrigues(Vec3(0.05, -0.02, 0.04));
  const Vec3 t(0.3, 0.1, -0.2);
  const auto cs = twoViewCorrespondences(rng, r, t, synthK(), 20);
  const Mat3 e = essentialFromFundamental(fundamentalFor(r, t, synthK()), synthK());
  EXPECT_LT(geodesicDistance(rotationFromEssential(e, cs, synthK()), r), 1e-6);
}

TEST(RotationFromEssential, PureTranslationGivesIdentity) {
  std::mt19937_64 rng(16);
  const Vec3 t(1, 0, 0);
  const auto cs = twoViewCorrespondences(rng, Rotation(), t, synthK(), 20, 360, 270, 20.0, 40.0);
  ASSERT_GE(cs.size(), 10u);
  const Mat3 e = essentialFromFundamental(fundamentalFor(Rotation(), t, synthK()), synthK());
  EXPECT_LT(geodesicDistance(rotationFromEssential(e, cs, synthK()), Rotation()), 1e-6);
}

TEST(RotationFromEssential, MirroredPointsFailCheirality) {
  std::mt19937_64 rng(17);
  const Rotation r = rodrigues(Vec3(0.02, 0.01, -0.01));
  const Vec3 t(0.2, 0.0, 0.05);
  const auto front = twoViewCorrespondences(rng, r, t, synthK(), 20);
  // The same rays with every point reflected through camera a's centre:
  // behind both cameras for the true pose, in front of both for (R, -t).
  const Mat3 kinv = synthK().inverseMatrix();
  std::vector<Correspondence> cs = front;
  std::uniform_real_distribution<double> uz(3.0, 6.0);
  for (const auto& c : front) {
    const Vec3 xa = -(kinv * c.p1.homogeneous()) * uz(rng);
    const Vec3 xb = r.matrix() * xa + t;
    ASSERT_LT(xb.z(), 0.0);
    const Vec3 q = synthK().matrix() * xb;
    cs.push_back({c.p1, q.head<2>() / q.z()});
  }
  const Mat3 e = essentialFromFundamental(fundamentalFor(r, t, synthK()), synthK());
  EXPECT_EQ(errorKindOf([&] { rotationFromEssential(e, cs, synthK()); }), ErrorKind::Cheirality);
  EXPECT_EQ(errorKindOf([&] { rotationFromEssential(e, {}, synthK()); }), ErrorKind::InvalidArgument);
}

TEST(RotationFromEssential, HundredRandomPoses) {
  std::mt19937_64 rng(18);
  for (int i = 0; i < 100; ++i) {
    const Rotation r = randomRotation(rng, 0.15);
    const Vec3 t = randomUnit(rng) * (0.25 + 0.25 * (i % 3));  // >= 0.05 of depth 3..6
    const auto cs = twoViewCorrespondences(rng, r, t, synthK(), 30);
    ASSERT_GE(cs.size(), 8u) << "draw " << i;
    const Mat3 e = essentialFromFundamental(fundamentalFor(r, t, synthK()), synthK());
    EXPECT_LT(geodesicDistance(rotationFromEssential(e, cs, synthK()), r), 1e-5) << "draw " << i;
  }
}

TEST(MixtureToGtFlow, MatchesSimulatorRotationFlow) {
  // A steady rate keeps the relative rotation the same for every row, so a
  // per-patch fundamental matrix is an exact model apart from translation.
  for (std::uint64_t seed : {1, 2, 3}) {
    SimConfig c = smallSequence(seed);
    c.n_frames = 4;
    c.trajectory.kind = TrajectoryKind::Constant;
    c.trajectory.omega = Vec3(0.3, -0.2, 0.1);
    const SynthBundle b = simulateSequence(c);
    MixtureOptions o;
    o.sigma = 0.1 * kH;
    for (std::size_t p = 0; p < b.pairs.size(); ++p) {
      const auto& cs = b.pairs[p].corrs;
      const FundamentalMixture fm = estimateMixture(cs, kH, o);
      const FlowField gt = mixtureToGtFlow(fm, cs, c.camera.intrinsics, 360, 270);
      const FlowField truth = b.rotationFlow(p);
      ASSERT_GT(meanEndpointError(FlowField(360, 270), truth), 2.0);
      EXPECT_LT(meanEndpointError(gt, truth), 0.1) << "seed " << seed << " pair " << p;
    }
  }
}

TEST(MixtureToGtFlow, NoRotationGivesZeroFlow) {
  SimConfig c = smallSequence(4);
  c.trajectory.kind = TrajectoryKind::Zero;
  const SynthBundle b = simulateSequence(c);
  const auto& cs = b.pairs[0].corrs;
  const FundamentalMixture fm = estimateMixture(cs, kH, MixtureOptions{});
  const FlowField gt = mixtureToGtFlow(fm, cs, c.camera.intrinsics, 360, 270);
  double worst = 0.0;
  for (double v : gt.data()) worst = std::max(worst, std::abs(v));
  EXPECT_LT(worst, 1e-6);
}

TEST(MixtureToGtFlow, GlobalShutterIndependentOfPatchCount) {
  SimConfig c = smallSequence(5);
  c.camera.timing.readout_s = 0.0;
  const SynthBundle b = simulateSequence(c);
  const auto& cs = b.pairs[0].corrs;
  MixtureOptions o1 = single(), o6;
  o6.sigma = 0.1 * kH;
  const FlowField f1 = mixtureToGtFlow(estimateMixture(cs, kH, o1), cs, c.camera.intrinsics, 360, 270);
  const FlowField f6 = mixtureToGtFlow(estimateMixture(cs, kH, o6), cs, c.camera.intrinsics, 360, 270);
  EXPECT_LT(maxAbsDifference(f1, f6), 1e-6);
}

TEST(MixtureIo, BlocksAndHomographyArraysRoundTrip) {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Mat3> mats(4);
  for (auto& m : mats) {
    for (int k = 0; k < 9; ++k) m(k) = n(rng);
  }
  std::stringstream io;
  writeMatrixBlocks(mats, io);
  const auto back = readMatrixBlocks(io);
  ASSERT_EQ(back.size(), mats.size());
  for (std::size_t i = 0; i < mats.size(); ++i) EXPECT_EQ(back[i], mats[i]);

  HomographyArray arr;
  arr.frame_height = 270;
  for (int i = 0; i < 6; ++i) arr.patches.push_back(rotationToHomography(randomRotation(rng, 0.1), synthK()));
  std::stringstream hio;
  writeHomographyArray(arr, hio);
  const HomographyArray hb = readHomographyArray(hio);
  EXPECT_EQ(hb.frame_height, 270);
  ASSERT_EQ(hb.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_LT((hb.patches[i].matrix() - arr.patches[i].matrix()).norm(), 1e-15);

  std::istringstream bad("1 2 3\n4 5\n");
  EXPECT_EQ(errorKindOf([&] { readMatrixBlocks(bad); }), ErrorKind::Parse);
}

TEST(Correspondences, CsvRoundTripAndErrors) {
  const std::vector<Correspondence> cs{{Vec2(1.25, 2), Vec2(3, 4.5)}, {Vec2(0, 0), Vec2(359, 269)}};
  std::stringstream io;
  writeCorrespondences(cs, io);
  const auto back = parseCorrespondences(io);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].p1, cs[0].p1);
  EXPECT_EQ(back[1].p2, cs[1].p2);
  std::istringstream bad("1,2,3\n");
  EXPECT_EQ(errorKindOf([&] { parseCorrespondences(bad); }), ErrorKind::Parse);
}

#include "gyrocomp/compensator.hpp"

#include "test_util.hpp"

#include <algorithm>
#include <cmath>

using namespace gyrocomp;
using namespace gyrocomp::testing;

namespace {

const Vec2 kCentre(180.0, 135.0);

HomographyArray randomGyroArray(std::mt19937_64& rng, int n = 6) {
  HomographyArray arr;
  arr.frame_height = 270;
  const Rotation base = randomRotation(rng, 0.03);
  for (int i = 0; i < n; ++i) {
    arr.patches.push_back(rotationToHomography(randomRotation(rng, 0.004) * base, synthK()));
  }
  return arr;
}

std::vector<CorrectionPair> pairsThrough(const std::vector<Mat3>& c, std::mt19937_64& rng, int count) {
  std::vector<CorrectionPair> pairs;
  for (int k = 0; k < count; ++k) {
    CorrectionPair p;
    p.gyro = randomGyroArray(rng, static_cast<int>(c.size()));
    p.gt.frame_height = 270;
    for (std::size_t i = 0; i < c.size(); ++i) p.gt.patches.emplace_back(c[i] * p.gyro.patches[i].matrix());
    pairs.push_back(p);
  }
  return pairs;
}

double maxPatchError(const PatchCorrection& c, const std::vector<Mat3>& want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    worst = std::max(worst, (c.mats[i] - want[i] / want[i](2, 2)).norm());
  }
  return worst;
}

}  // namespace

TEST(FitCorrection, IdentityData) {
  std::mt19937_64 rng(31);
  std::vector<CorrectionPair> pairs;
  for (int k = 0; k < 6; ++k) {
    const auto g = randomGyroArray(rng);
    pairs.push_back({g, g});
  }
  const PatchCorrection c = fitCorrection(pairs, kCentre);
  ASSERT_EQ(c.nPatches(), 6);
  for (const auto& m : c.mats) EXPECT_LT((m - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT(c.bias.norm(), 1e-9);
}

TEST(FitCorrection, RecoversTranslation) {
  std::mt19937_64 rng(32);
  const Mat3 t = Homography::translation(4.0, -2.5).matrix();
  const PatchCorrection c = fitCorrection(pairsThrough(std::vector<Mat3>(6, t), rng, 8), kCentre);
  EXPECT_LT(maxPatchError(c, std::vector<Mat3>(6, t)), 1e-8);
  EXPECT_LT(c.bias.norm(), 1e-8);
}

TEST(FitCorrection, SelfConsistentPerPatchCorrections) {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Mat3> want;
  for (int i = 0; i < 6; ++i) {
    Mat3 m = Mat3::Identity();
    m(0, 0) += 0.01 * n(rng);
    m(0, 1) += 0.01 * n(rng);
    m(1, 0) += 0.01 * n(rng);
    m(1, 1) += 0.01 * n(rng);
    m(0, 2) = 5.0 * n(rng);
    m(1, 2) = 5.0 * n(rng);
    m(2, 0) = 1e-5 * n(rng);
    m(2, 1) = 1e-5 * n(rng);
    want.push_back(m);
  }
  const PatchCorrection c = fitCorrection(pairsThrough(want, rng, 12), kCentre);
  EXPECT_LT(maxPatchError(c, want), 1e-6);
}

TEST(FitCorrection, OrderInvariant) {
  std::mt19937_64 rng(34);
  std::vector<CorrectionPair> pairs;
  for (int k = 0; k < 10; ++k) pairs.push_back({randomGyroArray(rng), randomGyroArray(rng)});
  const PatchCorrection a = fitCorrection(pairs, kCentre);
  std::reverse(pairs.begin(), pairs.end());
  std::rotate(pairs.begin(), pairs.begin() + 3, pairs.end());
  const PatchCorrection b = fitCorrection(pairs, kCentre);
  for (std::size_t i = 0; i < a.mats.size(); ++i) EXPECT_LT((a.mats[i] - b.mats[i]).norm(), 1e-12);
  EXPECT_LT((a.bias - b.bias).norm(), 1e-12);
}

TEST(FitCorrection, Errors) {
  std::mt19937_64 rng(35);
  std::vector<CorrectionPair> pairs;
  for (int k = 0; k < 3; ++k) pairs.push_back({randomGyroArray(rng), randomGyroArray(rng)});
  EXPECT_EQ(errorKindOf([&] { fitCorrection(pairs, kCentre); }), ErrorKind::InvalidArgument);
  pairs.push_back({randomGyroArray(rng), randomGyroArray(rng, 5)});
  EXPECT_EQ(errorKindOf([&] { fitCorrection(pairs, kCentre); }), ErrorKind::InvalidArgument);
  // Sum of G G^T is positive definite for invertible G, so the reachable
  // degenerate input is a homography that cannot be scaled to h22 = 1.
  std::vector<CorrectionPair> four;
  for (int k = 0; k < 4; ++k) four.push_back({randomGyroArray(rng), randomGyroArray(rng)});
  Mat3 h;
  h << 0, 0, 1, 0, 1, 0, 1, 0, 0;
  four[2].gyro.patches[3] = Homography(h);
  EXPECT_EQ(errorKindOf([&] { fitCorrection(four, kCentre); }), ErrorKind::DegenerateWarp);
}

TEST(ApplyCorrection, IdentityIsPlainFlow) {
  std::mt19937_64 rng(36);
  const HomographyArray g = randomGyroArray(rng);
  const FlowField a = applyCorrection(PatchCorrection::identity(6), g, 360, 270);
  const FlowField b = homographyArrayToFlow(g, 360, 270);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(ApplyCorrection, PureBias) {
  std::mt19937_64 rng(37);
  const HomographyArray g = randomGyroArray(rng);
  PatchCorrection c = PatchCorrection::identity(6);
  c.bias = Vec2(2, 0);
  const FlowField a = applyCorrection(c, g, 360, 270);
  const FlowField b = homographyArrayToFlow(g, 360, 270);
  double worst = 0.0;
  for (int y = 0; y < 270; ++y) {
    for (int x = 0; x < 360; ++x) worst = std::max(worst, (a.at(x, y) - b.at(x, y) - Vec2(2, 0)).norm());
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(ApplyCorrection, PatchCountMismatch) {
  std::mt19937_64 rng(38);
  const HomographyArray g = randomGyroArray(rng, 4);
  EXPECT_EQ(errorKindOf([&] { applyCorrection(PatchCorrection::identity(6), g, 360, 270); }), ErrorKind::Dimension);
}

TEST(Correction, JsonRoundTrip) {
  std::mt19937_64 rng(39);
  std::vector<CorrectionPair> pairs;
  for (int k = 0; k < 6; ++k) pairs.push_back({randomGyroArray(rng), randomGyroArray(rng)});
  const PatchCorrection c = fitCorrection(pairs, kCentre);
  const PatchCorrection back = parseCorrection(correctionToJson(c));
  ASSERT_EQ(back.nPatches(), c.nPatches());
  for (std::size_t i = 0; i < c.mats.size(); ++i) EXPECT_EQ(back.mats[i], c.mats[i]);
  EXPECT_EQ(back.bias, c.bias);
  EXPECT_EQ(errorKindOf([] { parseCorrection("{\"n_patches\": 2, \"mats\": [[1,0,0,0,1,0,0,0,1]], \"bias\": [0,0]}"); }),
            ErrorKind::Parse);
  EXPECT_EQ(errorKindOf([] { parseCorrection("not json"); }), ErrorKind::Parse);
  EXPECT_EQ(errorKindOf([] { loadCorrection("/nonexistent/c.json"); }), ErrorKind::Io);
}

TEST(Correction, ValidateRejectsSingularMatrix) {
  PatchCorrection c = PatchCorrection::identity(2);
  c.mats[1] = Mat3::Zero();
  EXPECT_EQ(errorKindOf([&] { c.validate(); }), ErrorKind::DegenerateWarp);
  c = PatchCorrection::identity(2);
  c.bias.x() = std::nan("");
  EXPECT_EQ(errorKindOf([&] { c.validate(); }), ErrorKind::InvalidArgument);
}

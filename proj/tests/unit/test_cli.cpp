#include "gyrocomp/camera_config.hpp"
#include "gyrocomp/cli.hpp"
#include "gyrocomp/compensator.hpp"
#include "gyrocomp/eval.hpp"
#include "gyrocomp/export.hpp"
#include "gyrocomp/flow_io.hpp"
#include "gyrocomp/gyro.hpp"

#include "test_util.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gyrocomp;
using namespace gyrocomp::testing;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "gyrocomp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("gyrocomp_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& rel) const { return (dir_ / rel).string(); }

  void write(const std::string& rel, const std::string& text) const {
    fs::create_directories((dir_ / rel).parent_path());
    std::ofstream(dir_ / rel) << text;
  }

  fs::path dir_;
};

}  // namespace

TEST(CliParse, Sigma) {
  EXPECT_DOUBLE_EQ(cli::parseSigma("27", 270), 27.0);
  EXPECT_DOUBLE_EQ(cli::parseSigma("0.1h", 270), 27.0);
  EXPECT_DOUBLE_EQ(cli::parseSigma("0.001h", 270), 0.27);
  EXPECT_EQ(errorKindOf([] { cli::parseSigma("abc", 270); }), ErrorKind::Parse);
  EXPECT_EQ(errorKindOf([] { cli::parseSigma("0.1x", 270); }), ErrorKind::Parse);
  EXPECT_EQ(errorKindOf([] { cli::parseSigma("-2", 270); }), ErrorKind::Parse);
}

TEST(CliParse, PairRange) {
  auto r = cli::parsePairRange("", 10);
  EXPECT_EQ(r.begin, 0u);
  EXPECT_EQ(r.end, 10u);
  r = cli::parsePairRange("2:5", 10);
  EXPECT_EQ(r.begin, 2u);
  EXPECT_EQ(r.end, 5u);
  r = cli::parsePairRange(":3", 10);
  EXPECT_EQ(r.end, 3u);
  r = cli::parsePairRange("7:", 10);
  EXPECT_EQ(r.begin, 7u);
  EXPECT_EQ(r.end, 10u);
  r = cli::parsePairRange("4:100", 10);
  EXPECT_EQ(r.end, 10u);
  EXPECT_EQ(errorKindOf([] { cli::parsePairRange("5:2", 10); }), ErrorKind::Parse);
  EXPECT_EQ(errorKindOf([] { cli::parsePairRange("a:b", 10); }), ErrorKind::Parse);
  EXPECT_EQ(errorKindOf([] { cli::parsePairRange("3", 10); }), ErrorKind::Parse);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"bogus"}).code, 2);
  const Result one = run({"synth", "--frames", "1", "--out", path("x")});
  EXPECT_EQ(one.code, 2);
  EXPECT_NE(one.err.find("--help"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"synth", "--help"}).code, 0);
  EXPECT_EQ(run({"--log-level", "loud", "synth", "--out", path("x")}).code, 2);
}

TEST_F(CliTest, JsonErrors) {
  const Result r = run({"--json-errors", "gtflow", "--out", path("g.flo")});
  EXPECT_EQ(r.code, 1);
  std::istringstream lines(r.err);
  std::string line, last;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.front() == '{') last = line;
  }
  const auto j = nlohmann::json::parse(last);
  EXPECT_EQ(j["error"]["kind"], "invalid-argument");
  EXPECT_FALSE(j["error"]["message"].get<std::string>().empty());
  EXPECT_FALSE(j["error"]["module"].get<std::string>().empty());
}

TEST_F(CliTest, SynthWritesManifestAndIsDeterministic) {
  const Result a = run({"--jobs", "1", "synth", "--frames", "2", "--seed", "1", "--out", path("a")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("manifest.json"), std::string::npos);
  const Manifest m = loadManifest(path("a/manifest.json"));
  EXPECT_EQ(m.pairs.size(), 1u);
  ASSERT_EQ(run({"--jobs", "3", "synth", "--frames", "2", "--seed", "1", "--out", path("b")}).code, 0);
  for (const auto& e : fs::recursive_directory_iterator(path("a"))) {
    if (!e.is_regular_file()) continue;
    std::ifstream x(e.path(), std::ios::binary), y(dir_ / "b" / fs::relative(e.path(), path("a")), std::ios::binary);
    std::stringstream sx, sy;
    sx << x.rdbuf();
    sy << y.rdbuf();
    EXPECT_EQ(sx.str(), sy.str()) << e.path();
  }
}

TEST_F(CliTest, GyroflowZeroLogGivesZeroFlow) {
  write("gyro.csv", "0,0,0,0\n50000000,0,0,0\n100000000,0,0,0\n150000000,0,0,0\n");
  write("frames.csv", "0,10000000\n1,43333333\n");
  write("cam.cfg", "fx=300\n");
  const Result r = run({"gyroflow", "--gyro", path("gyro.csv"), "--frame-stamps", path("frames.csv"), "--camera",
                        path("cam.cfg"), "--out", path("g")});
  ASSERT_EQ(r.code, 0) << r.err;
  const FlowField f = readFlo(fs::path(path("g/pair_0000.flo")));
  for (double v : f.data()) ASSERT_EQ(v, 0.0);
}

TEST_F(CliTest, GyroflowWithoutCameraFails) {
  write("gyro.csv", "0,0,0,0\n100000000,0,0,0\n");
  write("frames.csv", "0,10000000\n1,43333333\n");
  const Result r = run({"gyroflow", "--gyro", path("gyro.csv"), "--frame-stamps", path("frames.csv"), "--out", path("g")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--camera"), std::string::npos);
  EXPECT_EQ(run({"gyroflow", "--gyro", path("gyro.csv"), "--frame-stamps", path("frames.csv"), "--camera",
                 path("missing.cfg"), "--out", path("g")})
                .code,
            2);
}

TEST_F(CliTest, GyroflowReproducesStoredFlows) {
  ASSERT_EQ(run({"synth", "--frames", "3", "--seed", "4", "--out", path("d")}).code, 0);
  ASSERT_EQ(run({"gyroflow", "--manifest", path("d"), "--out", path("g")}).code, 0);
  const Manifest m = loadManifest(path("d/manifest.json"));
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    std::ifstream x(dir_ / "d" / m.pairs[i].gyro_flow, std::ios::binary);
    std::ifstream y(dir_ / "g" / (pairKey(i) + ".flo"), std::ios::binary);
    std::stringstream sx, sy;
    sx << x.rdbuf();
    sy << y.rdbuf();
    EXPECT_EQ(sx.str(), sy.str());
  }
}

TEST_F(CliTest, GtflowTooFewCorrespondences) {
  std::string csv;
  for (int i = 0; i < 7; ++i) csv += std::to_string(10 + 20 * i) + "," + std::to_string(15 + 30 * i) + "," +
                                     std::to_string(11 + 20 * i) + "," + std::to_string(16 + 30 * i) + "\n";
  write("c.csv", csv);
  write("cam.cfg", "fx=300\n");
  const Result r = run({"gtflow", "--corrs", path("c.csv"), "--camera", path("cam.cfg"), "--n-patches", "1", "--out",
                        path("o.flo")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("mixtures"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("o.flo")));
}

TEST_F(CliTest, GtflowEchoesMixtureOptions) {
  ASSERT_EQ(run({"synth", "--frames", "2", "--seed", "2", "--out", path("d")}).code, 0);
  const Manifest m = loadManifest(path("d/manifest.json"));
  write("cam.cfg", "");
  const Result r = run({"gtflow", "--corrs", (dir_ / "d" / m.pairs[0].corrs).string(), "--camera", path("cam.cfg"),
                        "--sigma", "0.1h", "--n-patches", "6", "--out", path("o.flo")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("N = 6"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("27"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("0.1h"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::is_regular_file(path("o.flo")));
}

TEST_F(CliTest, EvalZeroFlowReportsZero) {
  FlowField zero(360, 270);
  fs::create_directories(path("flows"));
  writeFlo(zero, fs::path(path("flows/p0.flo")));
  AnnotationPair a;
  a.points_a = {Vec2(10, 10), Vec2(200, 100)};
  a.points_b = a.points_a;
  fs::create_directories(path("anns"));
  saveAnnotation(a, path("anns/p0.json"));
  const Result r = run({"eval", "--flows", path("flows"), "--annotations", path("anns")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("0.000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("flows"), std::string::npos) << r.out;
  const Result j = run({"eval", "--flows", path("flows"), "--annotations", path("anns"), "--format", "json",
                        "--method", "zero"});
  ASSERT_EQ(j.code, 0);
  EXPECT_EQ(nlohmann::json::parse(j.out)["overall_mean"].get<double>(), 0.0);
}

TEST_F(CliTest, FitOnIdentityDataGivesIdentity) {
  ASSERT_EQ(run({"synth", "--frames", "6", "--seed", "5", "--out", path("d")}).code, 0);
  const Result r = run({"fit", "--manifest", path("d"), "--gyro-homographies", path("d/gyro_h"),
                        "--gt-homographies", path("d/gyro_h"), "--out", path("c.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const PatchCorrection c = loadCorrection(path("c.json"));
  for (const auto& m : c.mats) EXPECT_LT((m - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT(c.bias.norm(), 1e-9);
}

TEST_F(CliTest, EndToEndCompensationBeatsGyro) {
  ASSERT_EQ(run({"synth", "--frames", "16", "--seed", "3", "--translation", "0", "--amplitude", "0.15,0.15,0.05",
                 "--ois", "drift", "--ois-velocity", "60,-36", "--ois-shift", "-36,21.6", "--ois-max-shift", "40",
                 "--gt-source", "oracle", "--out", path("d")})
                .code,
            0);
  ASSERT_EQ(run({"fit", "--manifest", path("d"), "--pairs", ":8", "--out", path("c.json")}).code, 0);
  ASSERT_EQ(run({"compensate", "--manifest", path("d"), "--correction", path("c.json"), "--pairs", "8:", "--out",
                 path("comp")})
                .code,
            0);
  const Result comp = run({"eval", "--flows", path("comp"), "--manifest", path("d"), "--pairs", "8:", "--format", "json"});
  const Result gyro =
      run({"eval", "--flows", path("d/gyro_flow"), "--manifest", path("d"), "--pairs", "8:", "--format", "json"});
  ASSERT_EQ(comp.code, 0) << comp.err;
  ASSERT_EQ(gyro.code, 0) << gyro.err;
  const double ec = nlohmann::json::parse(comp.out)["overall_mean"].get<double>();
  const double eg = nlohmann::json::parse(gyro.out)["overall_mean"].get<double>();
  EXPECT_LT(ec, eg);
  EXPECT_EQ(nlohmann::json::parse(comp.out)["n_pairs"].get<int>(), 7);
}

TEST_F(CliTest, ConfigFileOverriddenByFlags) {
  write("run.toml", "[synth]\nframes = 4\nseed = 9\n");
  ASSERT_EQ(run({"--config", path("run.toml"), "synth", "--frames", "3", "--out", path("d")}).code, 0);
  const Manifest m = loadManifest(path("d/manifest.json"));
  EXPECT_EQ(m.pairs.size(), 2u);
  EXPECT_EQ(m.seed, 9u);
}

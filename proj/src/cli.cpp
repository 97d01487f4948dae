#include "gyrocomp/cli.hpp"

#include "gyrocomp/camera_config.hpp"
#include "gyrocomp/compensator.hpp"
#include "gyrocomp/errors.hpp"
#include "gyrocomp/eval.hpp"
#include "gyrocomp/export.hpp"
#include "gyrocomp/flow_io.hpp"
#include "gyrocomp/gyro.hpp"
#include "gyrocomp/mixtures.hpp"
#include "gyrocomp/parallel.hpp"
#include "gyrocomp/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace gyrocomp::cli {
namespace {

namespace fs = std::filesystem;
constexpr const char* kModule = "cli";

[[noreturn]] void fail(ErrorKind kind, const std::string& detail) { throw Error(kind, kModule, detail); }

// ---------------------------------------------------------------- options

struct MixtureArgs {
  int n_patches = 0;  // 0: camera's patch count
  std::string sigma;  // empty: library default
  double lambda = 1.0;
  double scale_tie = MixtureOptions{}.scale_tie;
};

struct Vec3Arg {
  std::vector<double> values;
  Vec3 get(const Vec3& fallback) const {
    return values.empty() ? fallback : Vec3(values[0], values[1], values[2]);
  }
};

struct Vec2Arg {
  std::vector<double> values;
  Vec2 get(const Vec2& fallback) const { return values.empty() ? fallback : Vec2(values[0], values[1]); }
};

const std::map<std::string, PatchBlend> kBlendNames{{"hard", PatchBlend::Hard}, {"linear", PatchBlend::LinearRows}};

void addVec3(CLI::App* app, const std::string& name, Vec3Arg& arg, const std::string& help) {
  app->add_option(name, arg.values, help + " (x,y,z)")->expected(3)->delimiter(',');
}

void addVec2(CLI::App* app, const std::string& name, Vec2Arg& arg, const std::string& help) {
  app->add_option(name, arg.values, help + " (u,v)")->expected(2)->delimiter(',');
}

void addMixtureOptions(CLI::App* app, MixtureArgs& m) {
  app->add_option("--n-patches", m.n_patches, "mixture patches (default: camera n_patches)")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--sigma", m.sigma, "row-weight bandwidth in pixels, or a fraction of the height such as 0.1h");
  app->add_option("--lambda", m.lambda, "weight of the ties for patches with fewer than 8 points")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--scale-tie", m.scale_tie, "weight of the neighbour ties between all patches")
      ->check(CLI::NonNegativeNumber);
}

void addBlend(CLI::App* app, PatchBlend& blend) {
  app->add_option("--blend", blend, "row-to-patch assignment when rendering flows")
      ->transform(CLI::CheckedTransformer(kBlendNames, CLI::ignore_case));
}

MixtureOptions mixtureOptions(const MixtureArgs& m, const CameraConfig& cam) {
  MixtureOptions o;
  o.n_patches = m.n_patches > 0 ? m.n_patches : cam.timing.n_patches;
  o.sigma = m.sigma.empty() ? defaultMixtureSigma(cam.height) : parseSigma(m.sigma, cam.height);
  o.lambda = m.lambda;
  o.scale_tie = m.scale_tie;
  spdlog::info("mixture: N = {}, sigma = {:g} px{}, lambda = {:g}", o.n_patches, o.sigma,
               m.sigma.empty() ? std::string(" (default)") : " (" + m.sigma + ")", o.lambda);
  return o;
}

// ------------------------------------------------------------------ files

std::ifstream openInput(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return in;
}

template <class Fn>
void writeOutput(const fs::path& path, Fn&& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  body(out);
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

void makeDir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

/// A manifest given either as the file itself or as its directory.
struct Dataset {
  Manifest manifest;
  fs::path dir;
};

Dataset loadDataset(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "manifest.json" : path;
  return {loadManifest(file), file.parent_path()};
}

const FrameStamp& findFrame(const std::vector<FrameStamp>& frames, std::int64_t index) {
  for (const auto& f : frames) {
    if (f.index == index) return f;
  }
  fail(ErrorKind::InvalidArgument, "frame " + std::to_string(index) + " has no time stamp");
}

HomographyArray readArray(const fs::path& path) {
  auto in = openInput(path);
  return readHomographyArray(in);
}

void writeArray(const HomographyArray& arr, const fs::path& path) {
  writeOutput(path, [&](std::ostream& o) { writeHomographyArray(arr, o); });
}

std::vector<std::size_t> selectPairs(const std::string& range, std::size_t n) {
  const PairRange r = parsePairRange(range, n);
  std::vector<std::size_t> out;
  for (std::size_t k = r.begin; k < r.end; ++k) out.push_back(k);
  if (out.empty()) fail(ErrorKind::NoData, "pair range '" + range + "' selects no pairs");
  return out;
}

// ------------------------------------------------------------ subcommands

struct Globals {
  int jobs = 0;
  std::string log_level = "info";
  bool json_errors = false;
};

struct SynthArgs {
  fs::path out;
  fs::path camera;
  int frames = 30;
  std::uint64_t seed = 1;
  double gyro_rate = SimConfig{}.gyro_rate_hz;
  double gyro_noise = SimConfig{}.gyro_noise;
  Vec3Arg gyro_bias;
  TrajectoryKind trajectory = TrajectoryKind::RandomWalk;
  Vec3Arg omega, amplitude, frequency, phase, translation_dir;
  double walk_cutoff = TrajectoryParams{}.walk_cutoff_hz;
  double translation = TrajectoryParams{}.translation_scale;
  OisKind ois = OisKind::None;
  Vec2Arg ois_shift, ois_velocity;
  double ois_gain = OisParams{}.gain;
  double ois_cutoff = OisParams{}.cutoff_hz;
  double ois_max_shift = OisParams{}.max_shift;
  int points = SceneParams{}.points_per_pair;
  int annotations = SceneParams{}.annotations_per_pair;
  double z_min = SceneParams{}.z_min;
  double z_max = SceneParams{}.z_max;
  GtSource gt_source = GtSource::Mixture;
  MixtureArgs mixture;
  PatchBlend blend = PatchBlend::Hard;
};

void runSynth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  SimConfig c;
  if (!a.camera.empty()) c.camera = loadCameraConfig(a.camera);
  c.n_frames = a.frames;
  c.seed = a.seed;
  c.gyro_rate_hz = a.gyro_rate;
  c.gyro_noise = a.gyro_noise;
  c.gyro_bias = a.gyro_bias.get(c.gyro_bias);
  auto& t = c.trajectory;
  t.kind = a.trajectory;
  t.omega = a.omega.get(t.omega);
  t.amplitude = a.amplitude.get(t.amplitude);
  t.frequency_hz = a.frequency.get(t.frequency_hz);
  t.phase = a.phase.get(t.phase);
  t.walk_cutoff_hz = a.walk_cutoff;
  t.translation_scale = a.translation;
  t.translation_dir = a.translation_dir.get(t.translation_dir);
  c.ois.kind = a.ois;
  c.ois.shift = a.ois_shift.get(c.ois.shift);
  c.ois.velocity = a.ois_velocity.get(c.ois.velocity);
  c.ois.gain = a.ois_gain;
  c.ois.cutoff_hz = a.ois_cutoff;
  c.ois.max_shift = a.ois_max_shift;
  c.scene.points_per_pair = a.points;
  c.scene.annotations_per_pair = a.annotations;
  c.scene.z_min = a.z_min;
  c.scene.z_max = a.z_max;
  c.validate();

  spdlog::info("synth: {} frames, seed {}, writing {}", c.n_frames, c.seed, a.out.string());
  const SynthBundle bundle = simulateSequence(c, g.jobs);
  ExportOptions eo;
  eo.gt_source = a.gt_source;
  if (a.gt_source == GtSource::Mixture) eo.mixture = mixtureOptions(a.mixture, c.camera);
  eo.blend = a.blend;
  eo.jobs = g.jobs;
  exportTrainingPairs(bundle, a.out, eo);
  out << (a.out / "manifest.json").string() << "\n";
}

struct GyroflowArgs {
  fs::path manifest;
  fs::path gyro, frame_stamps, camera;
  fs::path out;
  bool homographies = false;
  PatchBlend blend = PatchBlend::Hard;
};

void runGyroflow(const GyroflowArgs& a, const Globals& g, std::ostream& out) {
  CameraConfig cam;
  std::vector<GyroSample> samples;
  std::vector<FrameStamp> frames;
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  if (!a.manifest.empty()) {
    const Dataset d = loadDataset(a.manifest);
    if (d.manifest.gyro_log.empty() || d.manifest.frames.empty()) {
      fail(ErrorKind::InvalidArgument, "manifest must reference a gyro log and frame stamps");
    }
    cam = d.manifest.camera;
    auto gin = openInput(d.dir / d.manifest.gyro_log);
    samples = parseGyroLog(gin);
    auto fin = openInput(d.dir / d.manifest.frames);
    frames = parseFrameStamps(fin);
    for (const auto& p : d.manifest.pairs) pairs.emplace_back(p.a, p.b);
  } else {
    if (a.gyro.empty() || a.frame_stamps.empty() || a.camera.empty()) {
      fail(ErrorKind::InvalidArgument, "need --manifest, or all of --gyro, --frame-stamps and --camera");
    }
    cam = loadCameraConfig(a.camera);
    auto gin = openInput(a.gyro);
    samples = parseGyroLog(gin);
    auto fin = openInput(a.frame_stamps);
    frames = parseFrameStamps(fin);
    for (std::size_t k = 0; k + 1 < frames.size(); ++k) pairs.emplace_back(frames[k].index, frames[k + 1].index);
  }
  if (pairs.empty()) fail(ErrorKind::NoData, "no frame pairs to process");
  cam.validate();

  const GyroLog log(std::move(samples));
  makeDir(a.out);
  parallelFor(pairs.size(), g.jobs, [&](std::size_t k) {
    const auto& fa = findFrame(frames, pairs[k].first);
    const auto& fb = findFrame(frames, pairs[k].second);
    const auto h = gyroHomographyArray(log, fa, fb, cam.timing, cam.intrinsics, cam.height);
    const std::string key = pairKey(k);
    writeFlo(homographyArrayToFlow(h, cam.width, cam.height, a.blend, 1), a.out / (key + ".flo"));
    if (a.homographies) writeArray(h, a.out / (key + ".txt"));
  });
  out << pairs.size() << " gyro flows written to " << a.out.string() << "\n";
}

struct GtflowArgs {
  fs::path manifest;
  fs::path corrs, camera;
  fs::path out;
  bool homographies = false;
  MixtureArgs mixture;
  PatchBlend blend = PatchBlend::Hard;
};

HomographyArray gtArray(const std::vector<Correspondence>& cs, const CameraConfig& cam, const MixtureOptions& mo) {
  const auto fm = estimateMixture(cs, cam.height, mo);
  return mixtureRotationHomographies(fm, cs, cam.intrinsics);
}

void runGtflow(const GtflowArgs& a, const Globals& g, std::ostream& out) {
  if (a.manifest.empty()) {
    if (a.corrs.empty() || a.camera.empty()) {
      fail(ErrorKind::InvalidArgument, "need --manifest, or both --corrs and --camera");
    }
    const CameraConfig cam = loadCameraConfig(a.camera);
    const MixtureOptions mo = mixtureOptions(a.mixture, cam);
    auto in = openInput(a.corrs);
    const auto cs = parseCorrespondences(in);
    const auto h = gtArray(cs, cam, mo);
    writeFlo(homographyArrayToFlow(h, cam.width, cam.height, a.blend, g.jobs), a.out);
    if (a.homographies) writeArray(h, fs::path(a.out).replace_extension(".txt"));
    out << "gt flow written to " << a.out.string() << "\n";
    return;
  }

  const Dataset d = loadDataset(a.manifest);
  const CameraConfig& cam = d.manifest.camera;
  const MixtureOptions mo = mixtureOptions(a.mixture, cam);
  makeDir(a.out);
  const auto& pairs = d.manifest.pairs;
  parallelFor(pairs.size(), g.jobs, [&](std::size_t k) {
    if (pairs[k].corrs.empty()) {
      fail(ErrorKind::InvalidArgument, "pair " + std::to_string(k) + " lists no correspondences");
    }
    auto in = openInput(d.dir / pairs[k].corrs);
    const auto cs = parseCorrespondences(in);
    HomographyArray h;
    try {
      h = gtArray(cs, cam, mo);
    } catch (const Error& e) {
      throw Error(e.kind(), e.module(),
                  "frames " + std::to_string(pairs[k].a) + "-" + std::to_string(pairs[k].b) + ": " + e.detail());
    }
    const std::string key = pairKey(k);
    writeFlo(homographyArrayToFlow(h, cam.width, cam.height, a.blend, 1), a.out / (key + ".flo"));
    if (a.homographies) writeArray(h, a.out / (key + ".txt"));
  });
  out << pairs.size() << " gt flows written to " << a.out.string() << "\n";
}

/// Gyro and gt arrays for one manifest pair; directories override the
/// manifest's own homography files.
HomographyArray pairArray(const Dataset& d, std::size_t k, const fs::path& override_dir, bool gyro) {
  if (!override_dir.empty()) return readArray(override_dir / (pairKey(k) + ".txt"));
  const std::string& rel = gyro ? d.manifest.pairs[k].gyro_homographies : d.manifest.pairs[k].gt_homographies;
  if (rel.empty()) {
    fail(ErrorKind::InvalidArgument, "pair " + std::to_string(k) + " lists no " + (gyro ? "gyro" : "gt") +
                                         " homographies");
  }
  return readArray(d.dir / rel);
}

struct FitArgs {
  fs::path manifest;
  fs::path out;
  std::string pairs;
  fs::path gyro_h, gt_h;
};

void runFit(const FitArgs& a, std::ostream& out) {
  const Dataset d = loadDataset(a.manifest);
  std::vector<CorrectionPair> train;
  for (std::size_t k : selectPairs(a.pairs, d.manifest.pairs.size())) {
    train.push_back({pairArray(d, k, a.gyro_h, true), pairArray(d, k, a.gt_h, false)});
  }
  const auto& cam = d.manifest.camera;
  const PatchCorrection c = fitCorrection(train, Vec2(cam.intrinsics.cx, cam.intrinsics.cy));
  saveCorrection(c, a.out);
  spdlog::info("fit: {} pairs, {} patches, bias ({:.4f}, {:.4f}) px", train.size(), c.nPatches(), c.bias.x(),
               c.bias.y());
  out << "correction written to " << a.out.string() << "\n";
}

struct CompensateArgs {
  fs::path manifest;
  fs::path correction;
  fs::path out;
  std::string pairs;
  fs::path gyro_h;
  PatchBlend blend = PatchBlend::Hard;
};

void runCompensate(const CompensateArgs& a, const Globals& g, std::ostream& out) {
  const Dataset d = loadDataset(a.manifest);
  const PatchCorrection c = loadCorrection(a.correction);
  const auto& cam = d.manifest.camera;
  const auto selected = selectPairs(a.pairs, d.manifest.pairs.size());
  makeDir(a.out);
  parallelFor(selected.size(), g.jobs, [&](std::size_t i) {
    const std::size_t k = selected[i];
    const FlowField f = applyCorrection(c, pairArray(d, k, a.gyro_h, true), cam.width, cam.height, a.blend, 1);
    writeFlo(f, a.out / (pairKey(k) + ".flo"));
  });
  out << selected.size() << " compensated flows written to " << a.out.string() << "\n";
}

enum class ReportFormat { Table, Json, Csv };

struct EvalArgs {
  fs::path flows;
  fs::path manifest;
  fs::path annotations;
  std::string method;
  std::string pairs;
  ReportFormat format = ReportFormat::Table;
  fs::path out;
};

void runEval(const EvalArgs& a, const Globals& g, std::ostream& out) {
  std::map<std::string, AnnotationPair> anns;
  if (!a.manifest.empty()) {
    const Dataset d = loadDataset(a.manifest);
    for (std::size_t k : selectPairs(a.pairs, d.manifest.pairs.size())) {
      const auto& rel = d.manifest.pairs[k].annotation;
      if (rel.empty()) continue;
      anns[fs::path(rel).stem().string()] = loadAnnotation(d.dir / rel);
    }
  } else if (!a.annotations.empty()) {
    if (!a.pairs.empty()) fail(ErrorKind::InvalidArgument, "--pairs needs --manifest");
    for (const auto& entry : fs::directory_iterator(a.annotations)) {
      if (entry.path().extension() == ".json") anns[entry.path().stem().string()] = loadAnnotation(entry.path());
    }
  } else {
    fail(ErrorKind::InvalidArgument, "need --manifest or --annotations");
  }
  if (anns.empty()) fail(ErrorKind::NoData, "no annotations found");

  std::map<std::string, FlowField> flows;
  for (const auto& entry : fs::directory_iterator(a.flows)) {
    if (entry.path().extension() != ".flo") continue;
    const std::string key = entry.path().stem().string();
    // With a pair range, flows outside the selection are skipped rather
    // than reported as unannotated.
    if (!a.pairs.empty() && !anns.contains(key)) continue;
    flows.emplace(key, readFlo(entry.path()));
  }

  std::string method = a.method;
  if (method.empty()) method = fs::absolute(a.flows).lexically_normal().filename().string();
  if (method.empty()) method = fs::absolute(a.flows).lexically_normal().parent_path().filename().string();
  const EvalReport r = evaluateMethod(flows, anns, method, g.jobs);
  std::string text;
  switch (a.format) {
    case ReportFormat::Table: text = reportToTable(r); break;
    case ReportFormat::Json: text = reportToJson(r); break;
    case ReportFormat::Csv: text = reportToCsv(r); break;
  }
  if (a.out.empty()) {
    out << text;
  } else {
    writeOutput(a.out, [&](std::ostream& o) { o << text; });
  }
}

struct ExportArgs {
  fs::path manifest;
  fs::path out;
  MixtureArgs mixture;
  PatchBlend blend = PatchBlend::Hard;
};

void runExport(const ExportArgs& a, const Globals& g, std::ostream& out) {
  const Dataset d = loadDataset(a.manifest);
  ExportOptions eo;
  eo.mixture = mixtureOptions(a.mixture, d.manifest.camera);
  eo.blend = a.blend;
  eo.jobs = g.jobs;
  exportFromManifest(d.manifest, d.dir, a.out, eo);
  out << (a.out / "manifest.json").string() << "\n";
}

// ---------------------------------------------------------------- errors

void reportError(std::ostream& err, bool as_json, const std::string& module, const std::string& kind,
                 const std::string& message) {
  if (as_json) {
    const nlohmann::json j{{"error", {{"module", module}, {"kind", kind}, {"message", message}}}};
    err << j.dump() << "\n";
  } else {
    err << module << ": " << message << "\n";
  }
}

/// Routes the library's log output to `err` for the duration of a run.
class LogScope {
 public:
  LogScope(std::ostream& err, spdlog::level::level_enum level) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("gyrocomp", std::move(sink));
    logger->set_pattern("%l: %v");
    logger->set_level(level);
    spdlog::set_default_logger(std::move(logger));
  }
  ~LogScope() { spdlog::set_default_logger(previous_); }
  LogScope(const LogScope&) = delete;
  LogScope& operator=(const LogScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

}  // namespace

double parseSigma(const std::string& text, double frame_height) {
  std::string num = text;
  bool relative = false;
  if (!num.empty() && (num.back() == 'h' || num.back() == 'H')) {
    relative = true;
    num.pop_back();
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
  if (num.empty() || ec != std::errc() || ptr != num.data() + num.size() || !(v > 0.0) || !std::isfinite(v)) {
    fail(ErrorKind::Parse, "invalid sigma '" + text + "' (expected pixels such as 27 or a height fraction such as 0.1h)");
  }
  return relative ? v * frame_height : v;
}

PairRange parsePairRange(const std::string& text, std::size_t n) {
  if (text.empty()) return {0, n};
  const auto colon = text.find(':');
  if (colon == std::string::npos || text.find(':', colon + 1) != std::string::npos) {
    fail(ErrorKind::Parse, "invalid pair range '" + text + "' (expected a:b)");
  }
  const auto bound = [&](const std::string& s, std::size_t fallback) {
    if (s.empty()) return fallback;
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(ErrorKind::Parse, "invalid pair range '" + text + "'");
    return v;
  };
  const std::size_t begin = bound(text.substr(0, colon), 0);
  const std::size_t end = bound(text.substr(colon + 1), n);
  if (end < begin) fail(ErrorKind::Parse, "pair range '" + text + "' ends before it starts");
  return {std::min(begin, n), std::min(end, n)};
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  bool json_errors = false;
  for (int i = 1; i < argc; ++i) json_errors = json_errors || std::string(argv[i]) == "--json-errors";

  CLI::App app{"Gyroscope-guided rolling-shutter image alignment pipeline", "gyrocomp"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML or INI file with option values; command-line flags take precedence");
  Globals g;
  app.add_option("--jobs", g.jobs, "worker threads across frame pairs (0: all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--log-level", g.log_level, "error, warn, info or debug")
      ->check(CLI::IsMember({"error", "warn", "info", "debug"}));
  app.add_flag("--json-errors", g.json_errors, "report errors as one JSON object per line");

  const std::map<std::string, TrajectoryKind> trajectories{{"zero", TrajectoryKind::Zero},
                                                           {"constant", TrajectoryKind::Constant},
                                                           {"sinusoid", TrajectoryKind::Sinusoid},
                                                           {"walk", TrajectoryKind::RandomWalk}};
  const std::map<std::string, OisKind> ois_kinds{{"none", OisKind::None},
                                                 {"constant", OisKind::Constant},
                                                 {"drift", OisKind::Drift},
                                                 {"shake", OisKind::Shake}};
  const std::map<std::string, GtSource> gt_sources{{"mixture", GtSource::Mixture}, {"oracle", GtSource::Oracle}};
  const std::map<std::string, ReportFormat> formats{
      {"table", ReportFormat::Table}, {"json", ReportFormat::Json}, {"csv", ReportFormat::Csv}};

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "simulate a sequence and export it with flows and annotations");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->add_option("--camera", sa.camera, "camera config (key=value)")->check(CLI::ExistingFile);
  synth->add_option("--frames", sa.frames, "number of frames (>= 2)")->check(CLI::Range(2, 1000000));
  synth->add_option("--seed", sa.seed, "random seed");
  synth->add_option("--gyro-rate", sa.gyro_rate, "gyro sampling rate, Hz");
  synth->add_option("--gyro-noise", sa.gyro_noise, "gyro noise std, rad/s")->check(CLI::NonNegativeNumber);
  addVec3(synth, "--gyro-bias", sa.gyro_bias, "constant gyro bias, rad/s");
  synth->add_option("--trajectory", sa.trajectory, "zero, constant, sinusoid or walk")
      ->transform(CLI::CheckedTransformer(trajectories, CLI::ignore_case));
  addVec3(synth, "--omega", sa.omega, "constant or mean angular velocity, rad/s");
  addVec3(synth, "--amplitude", sa.amplitude, "sinusoid amplitude or walk std, rad/s");
  addVec3(synth, "--frequency", sa.frequency, "sinusoid frequency, Hz");
  addVec3(synth, "--phase", sa.phase, "sinusoid phase, rad");
  synth->add_option("--walk-cutoff", sa.walk_cutoff, "walk low-pass cutoff, Hz");
  synth->add_option("--translation", sa.translation, "translation per frame as a fraction of z_min")
      ->check(CLI::NonNegativeNumber);
  addVec3(synth, "--translation-dir", sa.translation_dir, "translation direction");
  synth->add_option("--ois", sa.ois, "none, constant, drift or shake")
      ->transform(CLI::CheckedTransformer(ois_kinds, CLI::ignore_case));
  addVec2(synth, "--ois-shift", sa.ois_shift, "constant lens shift or drift start, px");
  addVec2(synth, "--ois-velocity", sa.ois_velocity, "drift rate, px/s");
  synth->add_option("--ois-gain", sa.ois_gain, "shake compensation gain in [0, 1]");
  synth->add_option("--ois-cutoff", sa.ois_cutoff, "shake low-pass cutoff, Hz");
  synth->add_option("--ois-max-shift", sa.ois_max_shift, "lens shift saturation, px");
  synth->add_option("--points", sa.points, "correspondences per pair")->check(CLI::PositiveNumber);
  synth->add_option("--annotations", sa.annotations, "annotated points per pair")->check(CLI::PositiveNumber);
  synth->add_option("--z-min", sa.z_min, "nearest scene depth");
  synth->add_option("--z-max", sa.z_max, "farthest scene depth");
  synth->add_option("--gt-source", sa.gt_source, "mixture or oracle")
      ->transform(CLI::CheckedTransformer(gt_sources, CLI::ignore_case));
  addMixtureOptions(synth, sa.mixture);
  addBlend(synth, sa.blend);

  GyroflowArgs ga;
  auto* gyroflow = app.add_subcommand("gyroflow", "gyro-based flow per frame pair");
  gyroflow->add_option("--manifest", ga.manifest, "dataset manifest (file or directory)")->check(CLI::ExistingPath);
  gyroflow->add_option("--gyro", ga.gyro, "gyro CSV")->check(CLI::ExistingFile);
  gyroflow->add_option("--frame-stamps", ga.frame_stamps, "frame stamp CSV")->check(CLI::ExistingFile);
  gyroflow->add_option("--camera", ga.camera, "camera config")->check(CLI::ExistingFile);
  gyroflow->add_option("--out", ga.out, "output directory")->required();
  gyroflow->add_flag("--homographies", ga.homographies, "also write the per-patch arrays");
  addBlend(gyroflow, ga.blend);

  GtflowArgs ta;
  auto* gtflow = app.add_subcommand("gtflow", "Fundamental Mixtures rotation flow from correspondences");
  gtflow->add_option("--manifest", ta.manifest, "dataset manifest (file or directory)")->check(CLI::ExistingPath);
  gtflow->add_option("--corrs", ta.corrs, "correspondence CSV of one pair")->check(CLI::ExistingFile);
  gtflow->add_option("--camera", ta.camera, "camera config")->check(CLI::ExistingFile);
  gtflow->add_option("--out", ta.out, "output directory, or .flo file with --corrs")->required();
  gtflow->add_flag("--homographies", ta.homographies, "also write the per-patch arrays");
  addMixtureOptions(gtflow, ta.mixture);
  addBlend(gtflow, ta.blend);

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit a per-patch correction of gyro homographies");
  fit->add_option("--manifest", fa.manifest, "dataset manifest")->required()->check(CLI::ExistingPath);
  fit->add_option("--out", fa.out, "correction JSON")->required();
  fit->add_option("--pairs", fa.pairs, "half-open pair index range a:b");
  fit->add_option("--gyro-homographies", fa.gyro_h, "directory of <pair>.txt gyro arrays")
      ->check(CLI::ExistingDirectory);
  fit->add_option("--gt-homographies", fa.gt_h, "directory of <pair>.txt gt arrays")->check(CLI::ExistingDirectory);

  CompensateArgs ca;
  auto* compensate = app.add_subcommand("compensate", "apply a fitted correction to gyro homographies");
  compensate->add_option("--manifest", ca.manifest, "dataset manifest")->required()->check(CLI::ExistingPath);
  compensate->add_option("--correction", ca.correction, "correction JSON")->required()->check(CLI::ExistingFile);
  compensate->add_option("--out", ca.out, "output directory")->required();
  compensate->add_option("--pairs", ca.pairs, "half-open pair index range a:b");
  compensate->add_option("--gyro-homographies", ca.gyro_h, "directory of <pair>.txt gyro arrays")
      ->check(CLI::ExistingDirectory);
  addBlend(compensate, ca.blend);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "geometry distance of flows against annotations");
  eval->add_option("--flows", ea.flows, "directory of <pair>.flo")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--manifest", ea.manifest, "dataset manifest with annotations")->check(CLI::ExistingPath);
  eval->add_option("--annotations", ea.annotations, "directory of <pair>.json")->check(CLI::ExistingDirectory);
  eval->add_option("--method", ea.method, "method name in the report (default: flow directory name)");
  eval->add_option("--pairs", ea.pairs, "half-open pair index range a:b (with --manifest)");
  eval->add_option("--format", ea.format, "table, json or csv")
      ->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
  eval->add_option("--out", ea.out, "report file (default: standard output)");

  ExportArgs xa;
  auto* export_training = app.add_subcommand("export-training", "export training pairs from logged data");
  export_training->add_option("--manifest", xa.manifest, "input manifest with gyro log, frames and correspondences")
      ->required()
      ->check(CLI::ExistingPath);
  export_training->add_option("--out", xa.out, "output directory")->required();
  addMixtureOptions(export_training, xa.mixture);
  addBlend(export_training, xa.blend);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    reportError(err, json_errors, kModule, "Usage", e.what());
    if (!json_errors) err << "run with --help for usage\n";
    return 2;
  }

  LogScope logs(err, spdlog::level::from_str(g.log_level));
  try {
    if (*synth) runSynth(sa, g, out);
    if (*gyroflow) runGyroflow(ga, g, out);
    if (*gtflow) runGtflow(ta, g, out);
    if (*fit) runFit(fa, out);
    if (*compensate) runCompensate(ca, g, out);
    if (*eval) runEval(ea, g, out);
    if (*export_training) runExport(xa, g, out);
  } catch (const Error& e) {
    reportError(err, g.json_errors, e.module(), toString(e.kind()), e.detail());
    return 1;
  } catch (const std::exception& e) {
    reportError(err, g.json_errors, kModule, "Internal", e.what());
    return 1;
  }
  return 0;
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace gyrocomp::cli

#include "gyrocomp/export.hpp"

#include "gyrocomp/errors.hpp"
#include "gyrocomp/eval.hpp"
#include "gyrocomp/flow_io.hpp"
#include "gyrocomp/parallel.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace gyrocomp {
namespace fs = std::filesystem;
namespace {

constexpr const char* kModule = "export";
using nlohmann::json;

json cameraToJson(const CameraConfig& c) {
  return {{"fx", c.intrinsics.fx},
          {"fy", c.intrinsics.fy},
          {"cx", c.intrinsics.cx},
          {"cy", c.intrinsics.cy},
          {"skew", c.intrinsics.skew},
          {"t_s", c.timing.readout_s},
          {"t_f", c.timing.frame_period_s},
          {"n_patches", c.timing.n_patches},
          {"width", c.width},
          {"height", c.height}};
}

template <class T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::Parse, kModule, std::string("manifest lacks '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::Parse, kModule, std::string("manifest field '") + key + "' has the wrong type");
  }
}

std::string optionalString(const json& j, const char* key) {
  return j.contains(key) ? field<std::string>(j, key) : std::string();
}

CameraConfig cameraFromJson(const json& j) {
  CameraConfig c;
  c.intrinsics.fx = field<double>(j, "fx");
  c.intrinsics.fy = field<double>(j, "fy");
  c.intrinsics.cx = field<double>(j, "cx");
  c.intrinsics.cy = field<double>(j, "cy");
  c.intrinsics.skew = j.contains("skew") ? field<double>(j, "skew") : 0.0;
  c.timing.readout_s = field<double>(j, "t_s");
  c.timing.frame_period_s = field<double>(j, "t_f");
  c.timing.n_patches = field<int>(j, "n_patches");
  c.width = field<int>(j, "width");
  c.height = field<int>(j, "height");
  c.validate();
  return c;
}

std::string readText(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class Fn>
void writeFile(const fs::path& path, Fn&& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
  body(out);
  if (!out) throw Error(ErrorKind::Io, kModule, "write failed for " + path.string());
}

void makeDirs(const fs::path& out_dir) {
  std::error_code ec;
  for (const char* sub : {"", "gyro_flow", "gt_flow", "full_flow", "corrs", "gyro_h", "gt_h", "annotations"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw Error(ErrorKind::Io, kModule, "cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
}

const char* gtSourceName(GtSource s) { return s == GtSource::Mixture ? "mixture" : "oracle"; }

/// Gyro and gt arrays plus flows for one pair, written under the standard
/// layout; returns the manifest entry.
ManifestPair writePair(const fs::path& out_dir, const std::string& key, const FrameStamp& fa,
                       const FrameStamp& fb, const HomographyArray& gyro_h, const HomographyArray& gt_h,
                       const CameraConfig& cam, PatchBlend blend) {
  ManifestPair mp;
  mp.a = fa.index;
  mp.b = fb.index;
  mp.gyro_flow = "gyro_flow/" + key + ".flo";
  mp.gt_flow = "gt_flow/" + key + ".flo";
  mp.gyro_homographies = "gyro_h/" + key + ".txt";
  mp.gt_homographies = "gt_h/" + key + ".txt";
  writeFlo(homographyArrayToFlow(gyro_h, cam.width, cam.height, blend, 1), out_dir / mp.gyro_flow);
  writeFlo(homographyArrayToFlow(gt_h, cam.width, cam.height, blend, 1), out_dir / mp.gt_flow);
  writeFile(out_dir / mp.gyro_homographies, [&](std::ostream& o) { writeHomographyArray(gyro_h, o); });
  writeFile(out_dir / mp.gt_homographies, [&](std::ostream& o) { writeHomographyArray(gt_h, o); });
  return mp;
}

HomographyArray mixtureGt(std::span<const Correspondence> cs, const CameraConfig& cam,
                          const ExportOptions& options, std::int64_t a, std::int64_t b) {
  try {
    const auto fm = estimateMixture(cs, cam.height, options.mixture);
    return mixtureRotationHomographies(fm, cs, cam.intrinsics);
  } catch (const Error& e) {
    throw Error(e.kind(), e.module(),
                "frames " + std::to_string(a) + "-" + std::to_string(b) + ": " + e.detail());
  }
}

}  // namespace

std::string pairKey(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "pair_%04zu", index);
  return buf;
}

std::string manifestToJson(const Manifest& m) {
  json j;
  j["pairs"] = json::array();
  for (const auto& p : m.pairs) {
    json e = {{"a", p.a},
              {"b", p.b},
              {"gyro_flow", p.gyro_flow},
              {"gt_flow", p.gt_flow},
              {"full_flow", p.full_flow},
              {"corrs", p.corrs}};
    if (!p.gyro_homographies.empty()) e["gyro_homographies"] = p.gyro_homographies;
    if (!p.gt_homographies.empty()) e["gt_homographies"] = p.gt_homographies;
    if (!p.annotation.empty()) e["annotation"] = p.annotation;
    j["pairs"].push_back(std::move(e));
  }
  j["camera"] = cameraToJson(m.camera);
  j["seed"] = m.seed;
  if (!m.gyro_log.empty()) j["gyro_log"] = m.gyro_log;
  if (!m.frames.empty()) j["frames"] = m.frames;
  if (!m.parameters.empty()) j["parameters"] = m.parameters;
  return j.dump(2) + "\n";
}

Manifest parseManifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, kModule, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Parse, kModule, "manifest must be a JSON object");
  Manifest m;
  const json& pairs = j.contains("pairs") ? j["pairs"] : json();
  if (!pairs.is_array()) throw Error(ErrorKind::Parse, kModule, "manifest lacks a 'pairs' array");
  for (const auto& e : pairs) {
    ManifestPair p;
    p.a = field<std::int64_t>(e, "a");
    p.b = field<std::int64_t>(e, "b");
    p.gyro_flow = optionalString(e, "gyro_flow");
    p.gt_flow = optionalString(e, "gt_flow");
    p.full_flow = optionalString(e, "full_flow");
    p.corrs = optionalString(e, "corrs");
    p.gyro_homographies = optionalString(e, "gyro_homographies");
    p.gt_homographies = optionalString(e, "gt_homographies");
    p.annotation = optionalString(e, "annotation");
    m.pairs.push_back(std::move(p));
  }
  if (!j.contains("camera")) throw Error(ErrorKind::Parse, kModule, "manifest lacks 'camera'");
  m.camera = cameraFromJson(j["camera"]);
  m.seed = j.contains("seed") ? field<std::uint64_t>(j, "seed") : 0;
  m.gyro_log = optionalString(j, "gyro_log");
  m.frames = optionalString(j, "frames");
  if (j.contains("parameters")) m.parameters = field<std::map<std::string, std::string>>(j, "parameters");
  return m;
}

Manifest loadManifest(const fs::path& path) {
  try {
    return parseManifest(readText(path));
  } catch (const Error& e) {
    throw Error(e.kind(), kModule, path.string() + ": " + e.detail());
  }
}

void saveManifest(const Manifest& m, const fs::path& path) {
  writeFile(path, [&](std::ostream& o) { o << manifestToJson(m); });
}

Manifest exportTrainingPairs(const SynthBundle& bundle, const fs::path& out_dir, const ExportOptions& options) {
  if (!bundle.sim || bundle.pairs.empty()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "bundle has no frame pairs");
  }
  const CameraConfig& cam = bundle.config.camera;
  makeDirs(out_dir);

  Manifest m;
  m.camera = cam;
  m.seed = bundle.config.seed;
  m.gyro_log = "gyro.csv";
  m.frames = "frames.csv";
  m.parameters["gt_source"] = gtSourceName(options.gt_source);
  m.parameters["blend"] = options.blend == PatchBlend::Hard ? "hard" : "linear";
  writeFile(out_dir / m.gyro_log, [&](std::ostream& o) { writeGyroLog(bundle.gyro, o); });
  writeFile(out_dir / m.frames, [&](std::ostream& o) { writeFrameStamps(bundle.frames, o); });

  const GyroLog log(bundle.gyro);
  m.pairs.resize(bundle.pairs.size());
  parallelFor(bundle.pairs.size(), options.jobs, [&](std::size_t k) {
    const SynthPair& pair = bundle.pairs[k];
    const FrameStamp& fa = bundle.frames[pair.a];
    const FrameStamp& fb = bundle.frames[pair.b];
    const std::string key = pairKey(k);
    const auto gyro_h = gyroHomographyArray(log, fa, fb, cam.timing, cam.intrinsics, cam.height);
    const auto gt_h = options.gt_source == GtSource::Oracle
                          ? bundle.sim->observedPatchHomographies(fa, fb)
                          : mixtureGt(pair.corrs, cam, options, fa.index, fb.index);
    ManifestPair mp = writePair(out_dir, key, fa, fb, gyro_h, gt_h, cam, options.blend);

    mp.full_flow = "full_flow/" + key + ".flo";
    writeFlo(bundle.sim->fullFlow(fa, fb, 1), out_dir / mp.full_flow);
    mp.corrs = "corrs/" + key + ".csv";
    writeFile(out_dir / mp.corrs, [&](std::ostream& o) { writeCorrespondences(pair.corrs, o); });
    mp.annotation = "annotations/" + key + ".json";
    AnnotationPair ann;
    ann.category = Category::SYNTH;
    for (const auto& c : pair.annotations) {
      ann.points_a.push_back(c.p1);
      ann.points_b.push_back(c.p2);
    }
    saveAnnotation(ann, out_dir / mp.annotation);
    m.pairs[k] = std::move(mp);
  });

  saveManifest(m, out_dir / "manifest.json");
  return m;
}

Manifest exportFromManifest(const Manifest& in, const fs::path& in_dir, const fs::path& out_dir,
                            const ExportOptions& options) {
  if (in.pairs.empty()) throw Error(ErrorKind::NoData, kModule, "manifest lists no pairs");
  if (in.gyro_log.empty() || in.frames.empty()) {
    throw Error(ErrorKind::InvalidArgument, kModule, "manifest must reference a gyro log and frame stamps");
  }
  const CameraConfig& cam = in.camera;
  cam.validate();

  std::ifstream gyro_in(in_dir / in.gyro_log);
  if (!gyro_in) throw Error(ErrorKind::Io, kModule, "cannot open " + (in_dir / in.gyro_log).string());
  std::ifstream frames_in(in_dir / in.frames);
  if (!frames_in) throw Error(ErrorKind::Io, kModule, "cannot open " + (in_dir / in.frames).string());
  const auto samples = parseGyroLog(gyro_in);
  const auto frames = parseFrameStamps(frames_in);
  const GyroLog log(samples);

  const auto findFrame = [&](std::int64_t index) -> const FrameStamp& {
    for (const auto& f : frames) {
      if (f.index == index) return f;
    }
    throw Error(ErrorKind::InvalidArgument, kModule, "frame " + std::to_string(index) + " has no time stamp");
  };

  makeDirs(out_dir);
  Manifest m;
  m.camera = cam;
  m.seed = in.seed;
  m.gyro_log = "gyro.csv";
  m.frames = "frames.csv";
  m.parameters = in.parameters;
  m.parameters["gt_source"] = gtSourceName(GtSource::Mixture);
  m.parameters["blend"] = options.blend == PatchBlend::Hard ? "hard" : "linear";
  writeFile(out_dir / m.gyro_log, [&](std::ostream& o) { writeGyroLog(samples, o); });
  writeFile(out_dir / m.frames, [&](std::ostream& o) { writeFrameStamps(frames, o); });

  m.pairs.resize(in.pairs.size());
  parallelFor(in.pairs.size(), options.jobs, [&](std::size_t k) {
    const ManifestPair& src = in.pairs[k];
    if (src.corrs.empty()) {
      throw Error(ErrorKind::InvalidArgument, kModule, "pair " + std::to_string(k) + " lists no correspondences");
    }
    const FrameStamp& fa = findFrame(src.a);
    const FrameStamp& fb = findFrame(src.b);
    std::ifstream cin(in_dir / src.corrs);
    if (!cin) throw Error(ErrorKind::Io, kModule, "cannot open " + (in_dir / src.corrs).string());
    const auto corrs = parseCorrespondences(cin);

    const std::string key = pairKey(k);
    const auto gyro_h = gyroHomographyArray(log, fa, fb, cam.timing, cam.intrinsics, cam.height);
    const auto gt_h = mixtureGt(corrs, cam, options, fa.index, fb.index);
    ManifestPair mp = writePair(out_dir, key, fa, fb, gyro_h, gt_h, cam, options.blend);
    mp.corrs = "corrs/" + key + ".csv";
    writeFile(out_dir / mp.corrs, [&](std::ostream& o) { writeCorrespondences(corrs, o); });
    if (!src.annotation.empty()) {
      mp.annotation = "annotations/" + key + ".json";
      saveAnnotation(loadAnnotation(in_dir / src.annotation), out_dir / mp.annotation);
    }
    m.pairs[k] = std::move(mp);
  });

  saveManifest(m, out_dir / "manifest.json");
  return m;
}

}  // namespace gyrocomp

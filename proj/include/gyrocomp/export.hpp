#pragma once

#include "gyrocomp/camera_config.hpp"
#include "gyrocomp/mixtures.hpp"
#include "gyrocomp/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gyrocomp {

/// One frame pair of a dataset. Paths are relative to the manifest's
/// directory; optional entries are empty when absent.
struct ManifestPair {
  std::int64_t a = 0;  // frame indices
  std::int64_t b = 0;
  std::string gyro_flow;
  std::string gt_flow;
  std::string full_flow;
  std::string corrs;
  std::string gyro_homographies;
  std::string gt_homographies;
  std::string annotation;

  bool operator==(const ManifestPair&) const = default;
};

struct Manifest {
  std::vector<ManifestPair> pairs;
  CameraConfig camera;
  std::uint64_t seed = 0;
  std::string gyro_log;  // optional, relative path
  std::string frames;    // optional, relative path
  std::map<std::string, std::string> parameters;

  bool operator==(const Manifest&) const = default;
};

std::string manifestToJson(const Manifest& m);
Manifest parseManifest(const std::string& json);
Manifest loadManifest(const std::filesystem::path& path);
void saveManifest(const Manifest& m, const std::filesystem::path& path);

/// Where the exported gt flow comes from: the Fundamental Mixtures estimate
/// on the pair's correspondences, or the simulator's observed per-patch
/// homographies (rotation plus lens shift).
enum class GtSource { Mixture, Oracle };

struct ExportOptions {
  GtSource gt_source = GtSource::Mixture;
  MixtureOptions mixture;
  PatchBlend blend = PatchBlend::Hard;
  int jobs = 1;
};

/// Writes the gyro log, frame stamps and, per consecutive pair, gyro flow,
/// gt flow, full-motion flow, correspondences, annotation and both
/// homography arrays under `out_dir`, then `manifest.json`. Pairs are
/// processed in parallel; output bytes do not depend on `jobs`.
Manifest exportTrainingPairs(const SynthBundle& bundle, const std::filesystem::path& out_dir,
                             const ExportOptions& options);

/// Same layout from logged data: reads the gyro log, frame stamps and each
/// pair's correspondences referenced by `in` (relative to `in_dir`) and
/// writes gyro and mixture gt flows plus their homographies. Annotations
/// are carried over when present; the full-motion flow is not available.
Manifest exportFromManifest(const Manifest& in, const std::filesystem::path& in_dir,
                            const std::filesystem::path& out_dir, const ExportOptions& options);

/// Key used for every per-pair file, e.g. "pair_0003".
std::string pairKey(std::size_t index);

}  // namespace gyrocomp

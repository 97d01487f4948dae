#pragma once

#include "gyrocomp/geometry.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace gyrocomp {

/// Scene categories of the evaluation set; SYNTH marks simulator pairs.
enum class Category { RE, LT, LL, MF, SYNTH };

const char* toString(Category c);
Category parseCategory(const std::string& s);

/// Manually marked point matches between frames a and b.
struct AnnotationPair {
  std::vector<Vec2> points_a;
  std::vector<Vec2> points_b;
  Category category = Category::SYNTH;

  void validate() const;
  bool operator==(const AnnotationPair&) const = default;
};

/// {"category": str, "points_a": [[x,y]...], "points_b": [[x,y]...]}
std::string annotationToJson(const AnnotationPair& ann);
AnnotationPair parseAnnotation(const std::string& json);
AnnotationPair loadAnnotation(const std::filesystem::path& path);
void saveAnnotation(const AnnotationPair& ann, const std::filesystem::path& path);

/// Mean over points of |p_a + flow(p_a) - p_b|, flow sampled bilinearly.
/// Throws OutOfRange if a point lies outside [0, w-1] x [0, h-1].
double geometryDistance(const FlowField& flow, const AnnotationPair& ann);

/// Distance of the identity warp (zero flow).
double identityDistance(const AnnotationPair& ann);

struct PairResult {
  std::string key;
  Category category = Category::SYNTH;
  double distance = 0.0;      // after clamping
  double raw_distance = 0.0;  // before clamping
  double identity_distance = 0.0;
  bool clamped = false;
};

struct CategoryResult {
  Category category = Category::SYNTH;
  std::size_t count = 0;
  double mean = 0.0;
};

struct EvalReport {
  std::string method;
  std::vector<PairResult> pairs;            // sorted by key
  std::vector<CategoryResult> categories;   // categories that occur, enum order
  double overall_mean = 0.0;                // mean over pairs
};

/// Geometry distance of every flow against its annotation, clamped to the
/// identity distance, then aggregated. Every flow key needs an annotation
/// (NoData otherwise); annotations without a flow are ignored.
EvalReport evaluateMethod(const std::map<std::string, FlowField>& flows,
                          const std::map<std::string, AnnotationPair>& annotations,
                          const std::string& method, int jobs = 1);

std::string reportToJson(const EvalReport& r);
std::string reportToTable(const EvalReport& r);
std::string reportToCsv(const EvalReport& r);

}  // namespace gyrocomp

#include "gyrocomp/eval.hpp"

#include "gyrocomp/errors.hpp"
#include "gyrocomp/parallel.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gyrocomp {
namespace {

constexpr const char* kModule = "eval";
using nlohmann::json;

constexpr Category kCategories[] = {Category::RE, Category::LT, Category::LL, Category::MF,
                                    Category::SYNTH};

std::vector<Vec2> readPoints(const json& j, const char* field) {
  if (!j.contains(field) || !j[field].is_array()) {
    throw Error(ErrorKind::Parse, kModule, std::string("annotation lacks array '") + field + "'");
  }
  std::vector<Vec2> out;
  for (const auto& p : j[field]) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw Error(ErrorKind::Parse, kModule, std::string("'") + field + "' entries must be [x, y]");
    }
    out.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

const char* toString(Category c) {
  switch (c) {
    case Category::RE: return "RE";
    case Category::LT: return "LT";
    case Category::LL: return "LL";
    case Category::MF: return "MF";
    case Category::SYNTH: return "SYNTH";
  }
  return "?";
}

Category parseCategory(const std::string& s) {
  for (Category c : kCategories) {
    if (s == toString(c)) return c;
  }
  throw Error(ErrorKind::Parse, kModule, "unknown category '" + s + "' (expected RE, LT, LL, MF or SYNTH)");
}

void AnnotationPair::validate() const {
  if (points_a.empty() || points_a.size() != points_b.size()) {
    throw Error(ErrorKind::InvalidArgument, kModule,
                "annotation needs equally many points in both frames (got " +
                    std::to_string(points_a.size()) + " and " + std::to_string(points_b.size()) + ")");
  }
  for (std::size_t i = 0; i < points_a.size(); ++i) {
    if (!points_a[i].allFinite() || !points_b[i].allFinite()) {
      throw Error(ErrorKind::InvalidArgument, kModule, "annotation point " + std::to_string(i) + " is not finite");
    }
  }
}

std::string annotationToJson(const AnnotationPair& ann) {
  json j;
  j["category"] = toString(ann.category);
  j["points_a"] = json::array();
  j["points_b"] = json::array();
  for (const auto& p : ann.points_a) j["points_a"].push_back({p.x(), p.y()});
  for (const auto& p : ann.points_b) j["points_b"].push_back({p.x(), p.y()});
  return j.dump(2) + "\n";
}

AnnotationPair parseAnnotation(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, kModule, std::string("annotation is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("category") || !j["category"].is_string()) {
    throw Error(ErrorKind::Parse, kModule, "annotation lacks a string 'category'");
  }
  AnnotationPair ann;
  ann.category = parseCategory(j["category"].get<std::string>());
  ann.points_a = readPoints(j, "points_a");
  ann.points_b = readPoints(j, "points_b");
  ann.validate();
  return ann;
}

AnnotationPair loadAnnotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, kModule, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parseAnnotation(ss.str());
  } catch (const Error& e) {
    throw Error(e.kind(), kModule, path.string() + ": " + e.detail());
  }
}

void saveAnnotation(const AnnotationPair& ann, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, kModule, "cannot write " + path.string());
  out << annotationToJson(ann);
  if (!out) throw Error(ErrorKind::Io, kModule, "write failed for " + path.string());
}

double geometryDistance(const FlowField& flow, const AnnotationPair& ann) {
  ann.validate();
  double sum = 0.0;
  for (std::size_t i = 0; i < ann.points_a.size(); ++i) {
    const Vec2& pa = ann.points_a[i];
    if (!(pa.x() >= 0.0 && pa.y() >= 0.0 && pa.x() <= flow.width() - 1 && pa.y() <= flow.height() - 1)) {
      throw Error(ErrorKind::OutOfRange, kModule,
                  "annotation point (" + fixed(pa.x(), 3) + ", " + fixed(pa.y(), 3) +
                      ") lies outside the " + std::to_string(flow.width()) + "x" +
                      std::to_string(flow.height()) + " flow");
    }
    sum += (pa + flow.sampleBilinear(pa) - ann.points_b[i]).norm();
  }
  return sum / static_cast<double>(ann.points_a.size());
}

double identityDistance(const AnnotationPair& ann) {
  ann.validate();
  double sum = 0.0;
  for (std::size_t i = 0; i < ann.points_a.size(); ++i) sum += (ann.points_a[i] - ann.points_b[i]).norm();
  return sum / static_cast<double>(ann.points_a.size());
}

EvalReport evaluateMethod(const std::map<std::string, FlowField>& flows,
                          const std::map<std::string, AnnotationPair>& annotations,
                          const std::string& method, int jobs) {
  if (flows.empty()) throw Error(ErrorKind::NoData, kModule, "no flows to evaluate");
  EvalReport report;
  report.method = method;
  std::vector<std::pair<const FlowField*, const AnnotationPair*>> work;
  for (const auto& [key, flow] : flows) {
    const auto it = annotations.find(key);
    if (it == annotations.end()) {
      throw Error(ErrorKind::NoData, kModule, "no annotation for pair '" + key + "'");
    }
    PairResult r;
    r.key = key;
    r.category = it->second.category;
    report.pairs.push_back(r);
    work.emplace_back(&flow, &it->second);
  }

  parallelFor(work.size(), jobs, [&](std::size_t i) {
    auto& r = report.pairs[i];
    r.raw_distance = geometryDistance(*work[i].first, *work[i].second);
    r.identity_distance = identityDistance(*work[i].second);
    r.clamped = r.raw_distance > r.identity_distance;
    r.distance = r.clamped ? r.identity_distance : r.raw_distance;
  });

  double total = 0.0;
  for (const auto& r : report.pairs) total += r.distance;
  report.overall_mean = total / static_cast<double>(report.pairs.size());
  for (Category c : kCategories) {
    CategoryResult cr;
    cr.category = c;
    double sum = 0.0;
    for (const auto& r : report.pairs) {
      if (r.category != c) continue;
      ++cr.count;
      sum += r.distance;
    }
    if (cr.count == 0) continue;
    cr.mean = sum / static_cast<double>(cr.count);
    report.categories.push_back(cr);
  }
  return report;
}

std::string reportToJson(const EvalReport& r) {
  json j;
  j["method"] = r.method;
  j["overall_mean"] = r.overall_mean;
  j["n_pairs"] = r.pairs.size();
  j["categories"] = json::object();
  for (const auto& c : r.categories) {
    j["categories"][toString(c.category)] = {{"mean", c.mean}, {"count", c.count}};
  }
  j["pairs"] = json::array();
  for (const auto& p : r.pairs) {
    j["pairs"].push_back({{"key", p.key},
                          {"category", toString(p.category)},
                          {"distance", p.distance},
                          {"raw_distance", p.raw_distance},
                          {"identity_distance", p.identity_distance},
                          {"clamped", p.clamped}});
  }
  return j.dump(2) + "\n";
}

std::string reportToTable(const EvalReport& r) {
  std::ostringstream out;
  out << "method: " << r.method << "\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %8s %12s\n", "category", "pairs", "mean [px]");
  out << line;
  for (const auto& c : r.categories) {
    std::snprintf(line, sizeof line, "%-10s %8zu %12.3f\n", toString(c.category), c.count, c.mean);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-10s %8zu %12.3f\n", "overall", r.pairs.size(), r.overall_mean);
  out << line;
  return out.str();
}

std::string reportToCsv(const EvalReport& r) {
  std::ostringstream out;
  out << "key,category,distance,raw_distance,identity_distance,clamped\n";
  char line[256];
  for (const auto& p : r.pairs) {
    std::snprintf(line, sizeof line, "%s,%s,%.17g,%.17g,%.17g,%d\n", p.key.c_str(), toString(p.category),
                  p.distance, p.raw_distance, p.identity_distance, p.clamped ? 1 : 0);
    out << line;
  }
  return out.str();
}

}  // namespace gyrocomp

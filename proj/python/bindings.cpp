#include "gyrocomp/camera_config.hpp"
#include "gyrocomp/cli.hpp"
#include "gyrocomp/compensator.hpp"
#include "gyrocomp/errors.hpp"
#include "gyrocomp/eval.hpp"
#include "gyrocomp/flow_io.hpp"
#include "gyrocomp/geometry.hpp"
#include "gyrocomp/gyro.hpp"
#include "gyrocomp/mixtures.hpp"
#include "gyrocomp/synth.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace gyrocomp;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::handle g_error_type;

void requireShape(const F64Array& a, std::initializer_list<py::ssize_t> shape, const char* what) {
  bool ok = a.ndim() == static_cast<py::ssize_t>(shape.size());
  py::ssize_t d = 0;
  for (py::ssize_t s : shape) {
    if (!ok) break;
    ok = s < 0 || a.shape(d) == s;
    ++d;
  }
  if (!ok) throw Error(ErrorKind::Dimension, "python", std::string(what) + " has the wrong shape");
}

F64Array flowToArray(const FlowField& f) {
  F64Array out({f.height(), f.width(), 2});
  std::copy(f.data().begin(), f.data().end(), out.mutable_data());
  return out;
}

FlowField arrayToFlow(const F64Array& a) {
  requireShape(a, {-1, -1, 2}, "flow");
  FlowField f(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), f.data().begin());
  return f;
}

std::vector<GyroSample> arrayToGyro(const F64Array& a) {
  requireShape(a, {-1, 4}, "gyro log");
  std::vector<GyroSample> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    out[i].t_ns = std::llround(r(i, 0));
    out[i].omega = Vec3(r(i, 1), r(i, 2), r(i, 3));
  }
  return out;
}

F64Array gyroToArray(const std::vector<GyroSample>& g) {
  F64Array out({static_cast<py::ssize_t>(g.size()), py::ssize_t{4}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < g.size(); ++i) {
    w(i, 0) = static_cast<double>(g[i].t_ns);
    for (int c = 0; c < 3; ++c) w(i, c + 1) = g[i].omega[c];
  }
  return out;
}

std::vector<Correspondence> arrayToCorrs(const F64Array& a) {
  requireShape(a, {-1, 4}, "correspondences");
  std::vector<Correspondence> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = {Vec2(r(i, 0), r(i, 1)), Vec2(r(i, 2), r(i, 3))};
  return out;
}

F64Array corrsToArray(const std::vector<Correspondence>& cs) {
  F64Array out({static_cast<py::ssize_t>(cs.size()), py::ssize_t{4}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    w(i, 0) = cs[i].p1.x();
    w(i, 1) = cs[i].p1.y();
    w(i, 2) = cs[i].p2.x();
    w(i, 3) = cs[i].p2.y();
  }
  return out;
}

F64Array matsToArray(const std::vector<Mat3>& ms) {
  F64Array out({static_cast<py::ssize_t>(ms.size()), py::ssize_t{3}, py::ssize_t{3}});
  auto w = out.mutable_unchecked<3>();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) w(i, r, c) = ms[i](r, c);
    }
  }
  return out;
}

std::vector<Mat3> arrayToMats(const F64Array& a) {
  requireShape(a, {-1, 3, 3}, "matrix stack");
  std::vector<Mat3> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<3>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int c = 0; c < 3; ++c) out[i](j, c) = r(i, j, c);
    }
  }
  return out;
}

HomographyArray arrayToHomographies(const F64Array& a, int frame_height) {
  HomographyArray h;
  h.frame_height = frame_height;
  for (const Mat3& m : arrayToMats(a)) h.patches.emplace_back(m);
  return h;
}

F64Array homographiesToArray(const HomographyArray& h) {
  std::vector<Mat3> ms;
  for (const auto& p : h.patches) ms.push_back(p.matrix());
  return matsToArray(ms);
}

FrameStamp toStamp(const std::pair<std::int64_t, std::int64_t>& f) { return {f.first, f.second}; }

std::vector<Vec2> arrayToPoints(const F64Array& a) {
  requireShape(a, {-1, 2}, "points");
  std::vector<Vec2> out;
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out.emplace_back(r(i, 0), r(i, 1));
  return out;
}

OisKind parseOis(const std::string& s) {
  if (s == "none") return OisKind::None;
  if (s == "constant") return OisKind::Constant;
  if (s == "drift") return OisKind::Drift;
  if (s == "shake") return OisKind::Shake;
  throw Error(ErrorKind::InvalidArgument, "python", "unknown OIS model '" + s + "'");
}

TrajectoryKind parseTrajectory(const std::string& s) {
  if (s == "zero") return TrajectoryKind::Zero;
  if (s == "constant") return TrajectoryKind::Constant;
  if (s == "sinusoid") return TrajectoryKind::Sinusoid;
  if (s == "walk") return TrajectoryKind::RandomWalk;
  throw Error(ErrorKind::InvalidArgument, "python", "unknown trajectory '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gyroscope-based image alignment with OIS compensation";

  g_error_type = PyErr_NewException("gyrocomp._core.GyrocompError", PyExc_RuntimeError, nullptr);
  m.attr("GyrocompError") = g_error_type;
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(g_error_type)(e.what());
      inst.attr("kind") = toString(e.kind());
      inst.attr("module") = e.module();
      PyErr_SetObject(g_error_type.ptr(), inst.ptr());
    }
  });

  py::class_<CameraConfig>(m, "CameraConfig")
      .def(py::init<>())
      .def_property(
          "fx", [](const CameraConfig& c) { return c.intrinsics.fx; }, [](CameraConfig& c, double v) { c.intrinsics.fx = v; })
      .def_property(
          "fy", [](const CameraConfig& c) { return c.intrinsics.fy; }, [](CameraConfig& c, double v) { c.intrinsics.fy = v; })
      .def_property(
          "cx", [](const CameraConfig& c) { return c.intrinsics.cx; }, [](CameraConfig& c, double v) { c.intrinsics.cx = v; })
      .def_property(
          "cy", [](const CameraConfig& c) { return c.intrinsics.cy; }, [](CameraConfig& c, double v) { c.intrinsics.cy = v; })
      .def_property(
          "readout_s", [](const CameraConfig& c) { return c.timing.readout_s; },
          [](CameraConfig& c, double v) { c.timing.readout_s = v; })
      .def_property(
          "frame_period_s", [](const CameraConfig& c) { return c.timing.frame_period_s; },
          [](CameraConfig& c, double v) { c.timing.frame_period_s = v; })
      .def_property(
          "n_patches", [](const CameraConfig& c) { return c.timing.n_patches; },
          [](CameraConfig& c, int v) { c.timing.n_patches = v; })
      .def_readwrite("width", &CameraConfig::width)
      .def_readwrite("height", &CameraConfig::height)
      .def("K", [](const CameraConfig& c) { return c.intrinsics.matrix(); })
      .def("validate", &CameraConfig::validate)
      .def("__repr__", [](const CameraConfig& c) {
        std::ostringstream s;
        writeCameraConfig(c, s);
        return s.str();
      });
  m.def("load_camera_config", [](const std::filesystem::path& p) { return loadCameraConfig(p); }, py::arg("path"));

  m.def("rodrigues", [](const Vec3& v) { return rodrigues(v).matrix(); }, py::arg("rotvec"));
  m.def("rotation_log", [](const Mat3& r) { return rotationLog(Rotation::fromMatrix(r, 1e-6)); }, py::arg("R"));
  m.def(
      "geodesic_distance",
      [](const Mat3& a, const Mat3& b) { return geodesicDistance(Rotation::fromMatrix(a, 1e-6), Rotation::fromMatrix(b, 1e-6)); },
      py::arg("R1"), py::arg("R2"));

  m.def("read_flo", [](const std::filesystem::path& p) { return flowToArray(readFlo(p)); }, py::arg("path"),
        "Flow as a (height, width, 2) float64 array.");
  m.def("write_flo", [](const std::filesystem::path& p, const F64Array& a) { writeFlo(arrayToFlow(a), p); },
        py::arg("path"), py::arg("flow"));

  m.def(
      "gyro_homographies",
      [](const F64Array& gyro, std::pair<std::int64_t, std::int64_t> fa, std::pair<std::int64_t, std::int64_t> fb,
         const CameraConfig& cam) {
        const GyroLog log(arrayToGyro(gyro));
        return homographiesToArray(
            gyroHomographyArray(log, toStamp(fa), toStamp(fb), cam.timing, cam.intrinsics, cam.height));
      },
      py::arg("gyro"), py::arg("frame_a"), py::arg("frame_b"), py::arg("camera"),
      "Per-patch K R K^-1 between two frames. `gyro` rows are (t_ns, wx, wy, wz); frames are (index, t_start_ns).");
  m.def(
      "gyro_flow",
      [](const F64Array& gyro, std::pair<std::int64_t, std::int64_t> fa, std::pair<std::int64_t, std::int64_t> fb,
         const CameraConfig& cam, int jobs) {
        const GyroLog log(arrayToGyro(gyro));
        FlowField f;
        {
          py::gil_scoped_release release;
          f = gyroFlow(log, toStamp(fa), toStamp(fb), cam.timing, cam.intrinsics, cam.width, cam.height,
                       PatchBlend::Hard, jobs);
        }
        return flowToArray(f);
      },
      py::arg("gyro"), py::arg("frame_a"), py::arg("frame_b"), py::arg("camera"), py::arg("jobs") = 1);

  m.def(
      "estimate_mixture",
      [](const F64Array& corrs, double frame_height, int n_patches, double sigma, double scale_tie) {
        MixtureOptions o;
        o.n_patches = n_patches;
        o.sigma = sigma;
        o.scale_tie = scale_tie;
        return matsToArray(estimateMixture(arrayToCorrs(corrs), frame_height, o).mats);
      },
      py::arg("corrs"), py::arg("frame_height"), py::arg("n_patches") = 6, py::arg("sigma") = 0.0,
      py::arg("scale_tie") = 0.01,
      "Fundamental matrices (p1' F p2 = 0) from (N, 4) rows (x1, y1, x2, y2). sigma <= 0 picks the default.");
  m.def(
      "mixture_gt_flow",
      [](const F64Array& corrs, const CameraConfig& cam, int n_patches, double sigma, double scale_tie) {
        MixtureOptions o;
        o.n_patches = n_patches;
        o.sigma = sigma;
        o.scale_tie = scale_tie;
        const auto cs = arrayToCorrs(corrs);
        const FundamentalMixture fm = estimateMixture(cs, cam.height, o);
        return flowToArray(mixtureToGtFlow(fm, cs, cam.intrinsics, cam.width, cam.height));
      },
      py::arg("corrs"), py::arg("camera"), py::arg("n_patches") = 6, py::arg("sigma") = 0.0,
      py::arg("scale_tie") = 0.01);

  m.def(
      "simulate",
      [](std::uint64_t seed, int frames, const std::string& trajectory, double translation, const std::string& ois,
         const Vec2& ois_velocity, double gyro_rate_hz, double gyro_noise, bool flows, const CameraConfig& cam) {
        SimConfig c;
        c.camera = cam;
        c.seed = seed;
        c.n_frames = frames;
        c.trajectory.kind = parseTrajectory(trajectory);
        c.trajectory.translation_scale = translation;
        c.ois.kind = parseOis(ois);
        c.ois.velocity = ois_velocity;
        c.gyro_rate_hz = gyro_rate_hz;
        c.gyro_noise = gyro_noise;
        SynthBundle b;
        {
          py::gil_scoped_release release;
          b = simulateSequence(c);
        }
        py::dict out;
        out["gyro"] = gyroToArray(b.gyro);
        py::list stamps;
        for (const auto& f : b.frames) stamps.append(py::make_tuple(f.index, f.t_start_ns));
        out["frames"] = stamps;
        py::list pairs;
        for (std::size_t k = 0; k < b.pairs.size(); ++k) {
          py::dict p;
          p["a"] = b.pairs[k].a;
          p["b"] = b.pairs[k].b;
          p["corrs"] = corrsToArray(b.pairs[k].corrs);
          p["annotations"] = corrsToArray(b.pairs[k].annotations);
          p["observed_homographies"] = homographiesToArray(b.observedPatchHomographies(k));
          if (flows) {
            p["rotation_flow"] = flowToArray(b.rotationFlow(k));
            p["full_flow"] = flowToArray(b.fullFlow(k));
          }
          pairs.append(p);
        }
        out["pairs"] = pairs;
        return out;
      },
      py::arg("seed") = 1, py::arg("frames") = 30, py::arg("trajectory") = "walk", py::arg("translation") = 0.02,
      py::arg("ois") = "none", py::arg("ois_velocity") = Vec2(0, 0), py::arg("gyro_rate_hz") = 200.0,
      py::arg("gyro_noise") = 5e-4, py::arg("flows") = false, py::arg("camera") = CameraConfig{},
      "Synthetic sequence as a dict with gyro, frames and per-pair data.");

  m.def(
      "fit_correction",
      [](const std::vector<F64Array>& gyro, const std::vector<F64Array>& gt, const Vec2& image_center,
         int frame_height) {
        if (gyro.size() != gt.size()) throw Error(ErrorKind::Dimension, "python", "gyro and gt lists differ in length");
        std::vector<CorrectionPair> pairs;
        for (std::size_t k = 0; k < gyro.size(); ++k) {
          pairs.push_back({arrayToHomographies(gyro[k], frame_height), arrayToHomographies(gt[k], frame_height)});
        }
        const PatchCorrection c = fitCorrection(pairs, image_center);
        return py::make_tuple(matsToArray(c.mats), c.bias);
      },
      py::arg("gyro"), py::arg("gt"), py::arg("image_center"), py::arg("frame_height"),
      "Per-patch corrections and the global bias from lists of (N, 3, 3) arrays.");
  m.def(
      "apply_correction",
      [](const F64Array& mats, const Vec2& bias, const F64Array& gyro, int width, int height) {
        PatchCorrection c;
        c.mats = arrayToMats(mats);
        c.bias = bias;
        return flowToArray(applyCorrection(c, arrayToHomographies(gyro, height), width, height));
      },
      py::arg("mats"), py::arg("bias"), py::arg("gyro"), py::arg("width"), py::arg("height"));

  m.def(
      "geometry_distance",
      [](const F64Array& flow, const F64Array& points_a, const F64Array& points_b) {
        AnnotationPair a;
        a.points_a = arrayToPoints(points_a);
        a.points_b = arrayToPoints(points_b);
        return geometryDistance(arrayToFlow(flow), a);
      },
      py::arg("flow"), py::arg("points_a"), py::arg("points_b"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"gyrocomp"};
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line tool in-process; returns (exit code, stdout, stderr).");
}

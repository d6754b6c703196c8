#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "evgs/cli_app.hpp"
#include "evgs/config.hpp"
#include "evgs/e2v_prior.hpp"
#include "evgs/errors.hpp"
#include "evgs/event_io.hpp"
#include "evgs/image.hpp"
#include "evgs/losses.hpp"
#include "evgs/render.hpp"
#include "evgs/scene.hpp"
#include "evgs/simulator.hpp"

namespace py = pybind11;
using namespace evgs;

namespace {

py::array_t<double> to_numpy(const Image& img) {
  py::array_t<double> arr({img.height, img.width, img.channels});
  std::copy(img.data.begin(), img.data.end(), arr.mutable_data());
  return arr;
}

Image from_numpy(const py::array& any) {
  auto arr = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(any);
  if (!arr || (arr.ndim() != 2 && arr.ndim() != 3))
    throw py::value_error("expected an array of shape (h, w) or (h, w, c)");
  const int h = static_cast<int>(arr.shape(0));
  const int w = static_cast<int>(arr.shape(1));
  const int c = arr.ndim() == 2 ? 1 : static_cast<int>(arr.shape(2));
  Image img(h, w, c);
  std::copy(arr.data(), arr.data() + img.size(), img.data.begin());
  return img;
}

py::array_t<double> frame_to_numpy(const EventFrame& frame) {
  py::array_t<double> arr({frame.height, frame.width});
  std::copy(frame.values.begin(), frame.values.end(), arr.mutable_data());
  return arr;
}

std::vector<std::pair<std::int64_t, Image>> frames_from_py(
    const std::vector<std::pair<std::int64_t, py::array>>& frames) {
  std::vector<std::pair<std::int64_t, Image>> out;
  out.reserve(frames.size());
  for (const auto& [t, arr] : frames) out.emplace_back(t, from_numpy(arr));
  return out;
}

std::vector<std::pair<std::int64_t, py::array_t<double>>> frames_to_py(
    const std::vector<std::pair<std::int64_t, Image>>& frames) {
  std::vector<std::pair<std::int64_t, py::array_t<double>>> out;
  out.reserve(frames.size());
  for (const auto& [t, img] : frames) out.emplace_back(t, to_numpy(img));
  return out;
}

}  // namespace

PYBIND11_MODULE(_native, m) {
  m.doc() = "event-based gaussian splatting core";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<ValidationError>(m, "ValidationError");

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init<>())
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             return Intrinsics{fx, fy, cx, cy, width, height};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
           py::arg("height"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height);

  py::class_<Pose>(m, "Pose")
      .def(py::init<>())
      .def_property(
          "rotation",
          [](const Pose& p) {
            return py::make_tuple(p.rotation.w(), p.rotation.x(), p.rotation.y(), p.rotation.z());
          },
          [](Pose& p, const std::array<double, 4>& q) {
            p.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
          })
      .def_readwrite("translation", &Pose::translation);

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def("add_keyframe",
           [](Trajectory& t, std::int64_t t_us, const Pose& pose) {
             t.keyframes.emplace_back(t_us, pose);
           })
      .def("times",
           [](const Trajectory& t) {
             std::vector<std::int64_t> out;
             for (const auto& [ts, pose] : t.keyframes) out.push_back(ts);
             return out;
           })
      .def("pose_at", [](const Trajectory& t, std::int64_t t_us) { return pose_at(t, t_us); });

  py::class_<GaussianScene>(m, "GaussianScene")
      .def(py::init<>())
      .def_readwrite("sh_degree", &GaussianScene::sh_degree)
      .def("__len__", [](const GaussianScene& s) { return s.gaussians.size(); });
  m.def("save_scene", [](const std::string& path, const GaussianScene& s) { save_scene(path, s); },
        py::arg("path"), py::arg("scene"));
  m.def("load_scene", [](const std::string& path) { return load_scene(path); }, py::arg("path"));

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init<>())
      .def_readwrite("threshold", &SimConfig::threshold)
      .def_readwrite("log_floor", &SimConfig::log_floor)
      .def_readwrite("seed", &SimConfig::seed);

  py::class_<OrbitSpec>(m, "OrbitSpec")
      .def(py::init<>())
      .def_readwrite("center", &OrbitSpec::center)
      .def_readwrite("radius", &OrbitSpec::radius)
      .def_readwrite("elevation_rad", &OrbitSpec::elevation_rad)
      .def_readwrite("n_frames", &OrbitSpec::n_frames)
      .def_readwrite("duration_us", &OrbitSpec::duration_us)
      .def_readwrite("t_start_us", &OrbitSpec::t_start_us);

  py::class_<OrbitRender>(m, "OrbitRender")
      .def_property_readonly("frames",
                             [](const OrbitRender& r) { return frames_to_py(r.frames); })
      .def_readonly("trajectory", &OrbitRender::trajectory);

  py::class_<EventStream>(m, "EventStream")
      .def(py::init<>())
      .def_readwrite("width", &EventStream::width)
      .def_readwrite("height", &EventStream::height)
      .def_readwrite("threshold", &EventStream::threshold)
      .def("__len__", [](const EventStream& s) { return s.events.size(); })
      .def("numpy",
           [](const EventStream& s) {
             py::array_t<std::int64_t> arr(
                 {static_cast<py::ssize_t>(s.events.size()), py::ssize_t(4)});
             auto view = arr.mutable_unchecked<2>();
             for (py::ssize_t i = 0; i < view.shape(0); ++i) {
               const Event& e = s.events[static_cast<std::size_t>(i)];
               view(i, 0) = e.t;
               view(i, 1) = e.x;
               view(i, 2) = e.y;
               view(i, 3) = e.p;
             }
             return arr;
           },
           "events as an (n, 4) array of [t_us, x, y, polarity]")
      .def("accumulate", [](const EventStream& s, std::int64_t t1, std::int64_t t2) {
        return frame_to_numpy(accumulate_frame(s, t1, t2));
      });
  m.def("read_events_file",
        [](const std::string& path, std::optional<std::tuple<int, int, double>> meta) {
          std::optional<SensorMeta> sm;
          if (meta) sm = SensorMeta{std::get<0>(*meta), std::get<1>(*meta), std::get<2>(*meta)};
          return read_events_file(path, sm);
        },
        py::arg("path"), py::arg("meta") = std::nullopt,
        "meta is (width, height, threshold), required for CSV files");
  m.def("write_events_file",
        [](const std::string& path, const EventStream& s) { write_events_file(path, s); },
        py::arg("path"), py::arg("stream"));

  m.def("load_trajectory",
        [](const std::string& path) {
          auto [k, traj] = load_trajectory(path);
          return py::make_tuple(k, traj);
        },
        py::arg("path"), "returns (intrinsics, trajectory)");

  m.def("make_demo_scene", &make_demo_scene);
  m.def("demo_intrinsics", &demo_intrinsics);
  m.def("demo_orbit", &demo_orbit);
  m.def("render_orbit", &render_orbit, py::arg("scene"), py::arg("spec"), py::arg("intrinsics"));
  m.def("simulate_events",
        [](const std::vector<std::pair<std::int64_t, py::array>>& frames, const SimConfig& cfg) {
          return simulate_events(frames_from_py(frames), cfg);
        },
        py::arg("frames"), py::arg("config") = SimConfig{});

  m.def("render",
        [](const GaussianScene& scene, const Pose& pose, const Intrinsics& k) {
          return to_numpy(render(scene, pose, k).image);
        },
        py::arg("scene"), py::arg("pose"), py::arg("intrinsics"));

  py::class_<PriorFrameSet>(m, "PriorFrameSet")
      .def(py::init<>())
      .def_readwrite("source", &PriorFrameSet::source)
      .def_property_readonly("frames",
                             [](const PriorFrameSet& s) { return frames_to_py(s.frames); })
      .def("__len__", [](const PriorFrameSet& s) { return s.frames.size(); });
  m.def("naive_integrate",
        [](const EventStream& stream, const std::vector<std::int64_t>& times,
           std::int64_t half_life_us) { return naive_integrate(stream, times, half_life_us); },
        py::arg("stream"), py::arg("frame_times"), py::arg("half_life_us") = 200000);
  m.def("load_prior_frames",
        [](const std::string& path, int w, int h) { return load_prior_frames(path, w, h); },
        py::arg("manifest_path"), py::arg("expected_width") = 0, py::arg("expected_height") = 0);

  m.def("event_loss",
        [](const py::array& i1, const py::array& i2, const py::array& frame, double eps) {
          const Image a = from_numpy(i1);
          const Image b = from_numpy(i2);
          const Image f = from_numpy(frame);
          EventFrame ef(f.height, f.width, 0, 1);
          ef.values = f.data;
          return event_loss(a, b, ef, eps);
        },
        py::arg("first"), py::arg("second"), py::arg("frame"), py::arg("log_epsilon") = 1e-3);
  m.def("ssim",
        [](const py::array& a, const py::array& b) { return ssim(from_numpy(a), from_numpy(b)); });
  m.def("psnr",
        [](const py::array& a, const py::array& b) { return psnr(from_numpy(a), from_numpy(b)); });
  m.def("log_affine_align",
        [](const py::array& pred, const py::array& ref, double eps) {
          const AlignedImage out = log_affine_align(from_numpy(pred), from_numpy(ref), eps);
          return py::make_tuple(to_numpy(out.image), out.log_gain, out.log_offset, out.degenerate);
        },
        py::arg("pred"), py::arg("ref"), py::arg("log_epsilon") = 1e-3,
        "returns (aligned, log_gain, log_offset, degenerate)");

  m.def("read_png", [](const std::string& path) { return to_numpy(read_png(path)); });
  m.def("write_png",
        [](const std::string& path, const py::array& img) { write_png(path, from_numpy(img)); });

  m.def("canonical_config",
        [](const std::string& text) { return serialize_config(parse_config(text)); },
        "parse a config JSON string strictly and return its canonical form");

  m.def("cli",
        [](const std::vector<std::string>& args) {
          std::vector<std::string> full = args;
          full.insert(full.begin(), "evgs");
          std::vector<const char*> argv;
          for (const std::string& a : full) argv.push_back(a.c_str());
          std::ostringstream out, err;
          const int code =
              run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"),
        "run a CLI subcommand in-process; returns (exit_code, stdout, stderr)");
}

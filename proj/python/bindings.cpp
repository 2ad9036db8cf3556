// Python module: numpy in and out, thin wrappers over the C++ library.
#include "resim/bvh.hpp"
#include "resim/errors.hpp"
#include "resim/lidar_sim.hpp"
#include "resim/metrics.hpp"
#include "resim/pipeline.hpp"
#include "resim/ply.hpp"
#include "resim/shapes.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace resim;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Indices = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("expected an (N, 3) array");
  auto r = a.unchecked<2>();
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

Vec3 to_vec(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

py::array_t<double> from_points(const std::vector<Vec3>& pts) {
  py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int k = 0; k < 3; ++k) w(i, k) = pts[i][k];
  return a;
}

template <class T>
py::array_t<T> from_vector(const std::vector<T>& v) {
  return py::array_t<T>(static_cast<py::ssize_t>(v.size()), v.data());
}

TriangleMesh to_mesh(const Points& vertices, const Indices& triangles) {
  TriangleMesh m;
  m.vertices = to_points(vertices);
  if (triangles.ndim() != 2 || triangles.shape(1) != 3) {
    throw std::invalid_argument("triangles: expected an (M, 3) integer array");
  }
  auto t = triangles.unchecked<2>();
  for (py::ssize_t i = 0; i < triangles.shape(0); ++i) {
    Triangle tri{};
    for (int k = 0; k < 3; ++k) {
      if (t(i, k) < 0) throw std::invalid_argument("triangles: negative index");
      tri[k] = static_cast<std::uint32_t>(t(i, k));
    }
    m.triangles.push_back(tri);
  }
  m.validate();
  return m;
}

py::tuple mesh_arrays(const TriangleMesh& m) {
  py::array_t<std::int64_t> tris({static_cast<py::ssize_t>(m.triangles.size()), py::ssize_t{3}});
  auto w = tris.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.triangles.size(); ++i)
    for (int k = 0; k < 3; ++k) w(i, k) = m.triangles[i][k];
  return py::make_tuple(from_points(m.vertices), tris);
}

py::dict cloud_dict(const PointCloud& c) {
  py::dict d;
  d["points"] = from_points(c.points);
  if (c.has_intensity()) d["intensity"] = from_vector(c.intensity);
  if (c.has_beam_id()) d["beam_id"] = from_vector(c.beam_id);
  if (c.has_azimuth_step()) d["azimuth_step"] = from_vector(c.azimuth_step);
  if (c.has_azimuth()) d["azimuth"] = from_vector(c.azimuth);
  if (c.has_range()) d["range"] = from_vector(c.range);
  return d;
}

}  // namespace

PYBIND11_MODULE(_resim, m) {
  m.doc() = "LiDAR reconstruct / resimulate toolkit";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_KeyError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<PlyParseError>(m, "PlyParseError", PyExc_ValueError);
  py::register_exception<PlyUnsupportedError>(m, "PlyUnsupportedError", PyExc_ValueError);

  py::class_<Pose6D>(m, "Pose6D")
      .def(py::init(&make_pose), py::arg("x") = 0.0, py::arg("y") = 0.0, py::arg("z") = 0.0,
           py::arg("roll") = 0.0, py::arg("yaw") = 0.0, py::arg("pitch") = 0.0)
      .def_readwrite("x", &Pose6D::x)
      .def_readwrite("y", &Pose6D::y)
      .def_readwrite("z", &Pose6D::z)
      .def_readwrite("roll", &Pose6D::roll)
      .def_readwrite("yaw", &Pose6D::yaw)
      .def_readwrite("pitch", &Pose6D::pitch)
      .def("__repr__", [](const Pose6D& p) {
        return "Pose6D(x=" + std::to_string(p.x) + ", y=" + std::to_string(p.y) + ", z=" +
               std::to_string(p.z) + ", roll=" + std::to_string(p.roll) + ", yaw=" +
               std::to_string(p.yaw) + ", pitch=" + std::to_string(p.pitch) + ")";
      });
  m.def("wrap_angle", &wrap_angle, py::arg("angle"));

  py::class_<SensorProfile>(m, "SensorProfile")
      .def_readonly("name", &SensorProfile::name)
      .def_readwrite("channels", &SensorProfile::channels)
      .def_readwrite("vfov_min_deg", &SensorProfile::vfov_min_deg)
      .def_readwrite("vfov_max_deg", &SensorProfile::vfov_max_deg)
      .def_readwrite("rotation_rate_hz", &SensorProfile::rotation_rate_hz)
      .def_readwrite("points_per_second", &SensorProfile::points_per_second)
      .def_readwrite("max_range", &SensorProfile::max_range)
      .def_readwrite("drop_rate", &SensorProfile::drop_rate)
      .def_readwrite("range_noise_sigma", &SensorProfile::range_noise_sigma)
      .def_readwrite("mount", &SensorProfile::mount)
      .def_property_readonly("azimuth_steps", &SensorProfile::azimuth_steps_per_rotation)
      .def("validate", &SensorProfile::validate);
  m.def("preset", [](const std::string& name) { return preset(name); }, py::arg("name"));
  m.def("preset_names", &preset_names);
  m.def("load_profile", [](const std::filesystem::path& p) { return resolve_profile(p.string()); },
        py::arg("name_or_path"));
  m.def("beam_pattern", [](const SensorProfile& p) { return from_vector(beam_pattern(p)); },
        py::arg("profile"), "beam elevations in radians, ascending");

  m.def("make_box", [](const std::array<double, 3>& lo, const std::array<double, 3>& hi) {
    return mesh_arrays(make_box(to_vec(lo), to_vec(hi)));
  }, py::arg("min_corner"), py::arg("max_corner"));
  m.def("make_icosphere", [](const std::array<double, 3>& c, double r, int subdivisions) {
    return mesh_arrays(make_icosphere(to_vec(c), r, subdivisions));
  }, py::arg("center"), py::arg("radius"), py::arg("subdivisions") = 3);
  m.def("demo_scene_mesh", [] { return mesh_arrays(demo_scene().mesh()); });

  m.def("cast_scan",
        [](const Points& vertices, const Indices& triangles, const SensorProfile& profile,
           const Pose6D& pose, std::uint64_t seed, int threads) {
          const TriangleMesh mesh = to_mesh(vertices, triangles);
          SimulatedScan s;
          {
            py::gil_scoped_release release;
            s = cast_scan(build_bvh(mesh), profile, pose, seed, threads);
          }
          py::dict d = cloud_dict(s.cloud);
          d["rays_cast"] = s.rays_cast;
          d["dropped"] = s.dropped_count;
          d["missed"] = s.miss_count;
          return d;
        },
        py::arg("vertices"), py::arg("triangles"), py::arg("profile"), py::arg("pose") = Pose6D{},
        py::arg("seed") = 0, py::arg("threads") = 1,
        "Points come back in the world frame.");

  m.def("chamfer",
        [](const Points& a, const Points& b, double truncation, int threads) {
          const auto pa = to_points(a), pb = to_points(b);
          const CdResult r = chamfer(pa, pb, truncation, threads);
          py::dict d;
          d["forward"] = r.forward_term;
          d["backward"] = r.backward_term;
          d["total"] = r.total;
          return d;
        },
        py::arg("g_hat"), py::arg("g"), py::arg("truncation") = kDefaultTruncation,
        py::arg("threads") = 1);
  m.def("rmse_depth",
        [](const std::vector<double>& rendered, const std::vector<double>& measured) {
          return rmse_depth(rendered, measured);
        },
        py::arg("rendered"), py::arg("measured"));
  m.def("rank_sequences",
        [](const std::vector<std::tuple<std::string, double, double>>& rows) {
          std::vector<SequenceScore> s;
          for (const auto& [id, rmse, cd] : rows) s.push_back({id, rmse, cd});
          std::vector<std::tuple<std::string, double, double>> out;
          for (const auto& r : rank_sequences(s)) out.emplace_back(r.sequence_id, r.rmse, r.cd);
          return out;
        },
        py::arg("rows"), "rows of (sequence_id, rmse, cd)");

  m.def("read_ply_cloud", [](const std::filesystem::path& p) { return cloud_dict(read_ply_cloud(p)); },
        py::arg("path"));
  m.def("read_ply_mesh", [](const std::filesystem::path& p) { return mesh_arrays(read_ply_mesh(p)); },
        py::arg("path"));
  m.def("write_ply_cloud", [](const Points& pts, const std::filesystem::path& p) {
    PointCloud c;
    c.points = to_points(pts);
    write_ply(c, p);
  }, py::arg("points"), py::arg("path"));

  m.def("write_demo_sequence",
        [](const std::filesystem::path& dir, std::uint64_t seed, int frames, const std::string& profile,
           double noise, bool moving_vehicle) {
          DemoOptions o;
          o.seed = seed;
          o.frames = frames;
          o.profile = profile;
          o.range_noise = noise;
          o.moving_vehicle = moving_vehicle;
          write_demo_sequence(dir, o);
        },
        py::arg("directory"), py::arg("seed") = 0, py::arg("frames") = 3,
        py::arg("profile") = "waymo-top", py::arg("noise") = -1.0, py::arg("moving_vehicle") = true);

  // Pipeline commands take a config path plus the same overrides as the CLI.
  auto configure = [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
                      std::optional<std::filesystem::path> out, std::optional<int> threads) {
    PipelineConfig cfg = load_pipeline_config(config);
    if (seed) cfg.seed = *seed;
    if (out) cfg.output_dir = *out;
    if (threads) cfg.threads = *threads;
    return cfg;
  };
  auto paths = [](const std::vector<std::filesystem::path>& files) {
    std::vector<std::string> out;
    for (const auto& f : files) out.push_back(f.string());
    return out;
  };
  m.def("reconstruct",
        [=](const std::filesystem::path& config, std::optional<std::string> method,
            std::optional<std::uint64_t> seed, std::optional<std::filesystem::path> out,
            std::optional<int> threads) {
          PipelineConfig cfg = configure(config, seed, out, threads);
          if (method) cfg.method = parse_recon_method(*method);
          ReconstructOutput r;
          {
            py::gil_scoped_release release;
            r = cmd_reconstruct(cfg);
          }
          py::dict d;
          d["files"] = paths(r.files);
          d["consolidated_points"] = r.consolidated_points;
          d["removed_outliers"] = r.removed_outliers;
          if (r.fit) {
            d["initial_loss"] = r.fit->initial_loss;
            d["final_loss"] = r.fit->final_loss;
            d["sigmoid_scale"] = r.fit->sigmoid_scale;
          }
          if (r.comparison) d["comparison_cd"] = r.comparison->total;
          return d;
        },
        py::arg("config"), py::arg("method") = py::none(), py::arg("seed") = py::none(),
        py::arg("out") = py::none(), py::arg("threads") = py::none());
  m.def("simulate",
        [=](const std::filesystem::path& config, std::optional<std::filesystem::path> mesh,
            std::vector<std::string> profiles, std::optional<std::uint64_t> seed,
            std::optional<std::filesystem::path> out, std::optional<int> threads) {
          const PipelineConfig cfg = configure(config, seed, out, threads);
          SimulateOutput r;
          {
            py::gil_scoped_release release;
            r = cmd_simulate(cfg, mesh, profiles);
          }
          py::list frames;
          for (const auto& f : r.frames) {
            py::dict d;
            d["profile"] = f.profile;
            d["frame"] = f.frame;
            d["points"] = f.points;
            d["dropped"] = f.dropped;
            d["missed"] = f.missed;
            d["objects"] = f.objects;
            frames.append(d);
          }
          py::dict d;
          d["files"] = paths(r.files);
          d["frames"] = frames;
          return d;
        },
        py::arg("config"), py::arg("mesh") = py::none(), py::arg("profiles") = std::vector<std::string>{},
        py::arg("seed") = py::none(), py::arg("out") = py::none(), py::arg("threads") = py::none());
  m.def("evaluate",
        [=](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
            std::optional<std::filesystem::path> out, std::optional<int> threads) {
          const PipelineConfig cfg = configure(config, seed, out, threads);
          EvaluateOutput r;
          {
            py::gil_scoped_release release;
            r = cmd_evaluate(cfg);
          }
          py::list scores;
          for (const auto& s : r.scores) {
            py::dict d;
            d["sequence_id"] = s.sequence_id;
            d["frame"] = s.frame;
            d["rmse"] = s.rmse;
            d["cd"] = s.cd;
            d["matched_rays"] = s.matched_rays;
            scores.append(d);
          }
          py::list ranking;
          for (const auto& s : r.ranking) ranking.append(s.sequence_id);
          py::dict d;
          d["files"] = paths(r.files);
          d["scores"] = scores;
          d["ranking"] = ranking;
          return d;
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(),
        py::arg("threads") = py::none());
  m.def("stats",
        [=](const std::vector<std::filesystem::path>& labels, double bin_width,
            const std::filesystem::path& out) {
          const StatsOutput r = cmd_stats(labels, bin_width, out);
          py::dict d;
          d["files"] = paths(r.files);
          d["divergence"] = r.divergence;
          return d;
        },
        py::arg("labels"), py::arg("bin_width") = 0.25, py::arg("out") = "out");
  m.def("presets_table", &presets_table);
}

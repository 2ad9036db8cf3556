#include "resim/pipeline.hpp"

#include "resim/errors.hpp"
#include "resim/mesh_extraction.hpp"
#include "resim/parallel.hpp"
#include "resim/ply.hpp"
#include "resim/random.hpp"
#include "resim/shapes.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace resim {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(ReconMethod m) {
  switch (m) {
    case ReconMethod::Tsdf: return "tsdf";
    case ReconMethod::VolumeFit: return "volume-fit";
    case ReconMethod::Both: return "both";
  }
  return "tsdf";
}

ReconMethod parse_recon_method(std::string_view s) {
  if (s == "tsdf") return ReconMethod::Tsdf;
  if (s == "volume-fit") return ReconMethod::VolumeFit;
  if (s == "both") return ReconMethod::Both;
  throw InputError("method: expected tsdf, volume-fit or both, got '" + std::string(s) + "'");
}

std::uint64_t stage_seed(std::uint64_t root, Stage stage) {
  return sub_seed(root, static_cast<std::uint64_t>(stage));
}

// --- config -----------------------------------------------------------------

namespace {

// Typed access to one JSON object with field paths in every error.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InputError(where() + ": expected an object");
  }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& [key, _] : j_.items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw InputError(field(key) + ": unknown key");
      }
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InputError(field(key) + ": wrong type");
    }
  }

  Section child(const char* key) const { return Section(j_.at(key), field(key)); }

  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

 private:
  std::string where() const { return path_.empty() ? std::string("config") : path_; }

  const json& j_;
  std::string path_;
};

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path fp(p);
  return fp.is_absolute() ? fp : base / fp;
}

bool is_preset_name(const std::string& s) {
  const auto names = preset_names();
  return std::find(names.begin(), names.end(), s) != names.end();
}

}  // namespace

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError("config " + path.string() + ": " + e.what());
  }
  const fs::path base = path.parent_path();
  PipelineConfig cfg;
  cfg.threads = default_thread_count();
  const Section root(j, "");
  root.allow({"manifest", "grid", "method", "tsdf", "render", "optimizer", "fit", "ingest",
              "source_profile", "target_profiles", "replay", "simulate", "evaluate", "stats",
              "output", "seed", "threads"});

  auto opt_path = [&](const Section& s, const char* key, std::optional<fs::path>& out) {
    if (!s.has(key)) return;
    std::string p;
    s.get(key, p);
    out = resolve_path(base, p);
  };

  if (root.has("manifest")) {
    std::string p;
    root.get("manifest", p);
    cfg.manifest = resolve_path(base, p);
  }
  if (root.has("grid")) {
    const auto g = root.child("grid");
    g.allow({"voxel_size", "padding", "origin", "dims"});
    g.get("voxel_size", cfg.grid.voxel_size);
    g.get("padding", cfg.grid.padding);
    if (g.has("origin")) {
      std::array<double, 3> o{};
      g.get("origin", o);
      cfg.grid.origin = Vec3(o[0], o[1], o[2]);
    }
    if (g.has("dims")) {
      std::array<int, 3> d{};
      g.get("dims", d);
      cfg.grid.dims = d;
    }
    if (cfg.grid.origin.has_value() != cfg.grid.dims.has_value()) {
      throw InputError("grid: origin and dims must be given together");
    }
  }
  if (root.has("method")) {
    std::string m;
    root.get("method", m);
    cfg.method = parse_recon_method(m);
  }
  if (root.has("tsdf")) {
    const auto t = root.child("tsdf");
    t.allow({"truncation_distance", "max_weight"});
    t.get("truncation_distance", cfg.tsdf.truncation_distance);
    t.get("max_weight", cfg.tsdf.max_weight);
  }
  if (root.has("render")) {
    const auto r = root.child("render");
    r.allow({"num_samples", "t_near", "t_far", "sigmoid_scale", "stratified"});
    r.get("num_samples", cfg.render.num_samples);
    r.get("t_near", cfg.render.t_near);
    r.get("t_far", cfg.render.t_far);
    r.get("sigmoid_scale", cfg.render.sigmoid_scale);
    r.get("stratified", cfg.render.stratified);
  }
  if (root.has("optimizer")) {
    const auto o = root.child("optimizer");
    o.allow({"epochs", "batch_size", "learning_rate", "final_lr_fraction", "beta1", "beta2",
             "adam_epsilon", "lambda_smooth", "lambda_eik", "learn_scale", "scale_learning_rate",
             "scale_min", "scale_max", "trace_smoothing"});
    auto& op = cfg.optimizer;
    o.get("epochs", op.epochs);
    o.get("batch_size", op.batch_size);
    o.get("learning_rate", op.learning_rate);
    o.get("final_lr_fraction", op.final_lr_fraction);
    o.get("beta1", op.beta1);
    o.get("beta2", op.beta2);
    o.get("adam_epsilon", op.adam_epsilon);
    o.get("lambda_smooth", op.lambda_smooth);
    o.get("lambda_eik", op.lambda_eik);
    o.get("learn_scale", op.learn_scale);
    o.get("scale_learning_rate", op.scale_learning_rate);
    o.get("scale_min", op.scale_min);
    o.get("scale_max", op.scale_max);
    o.get("trace_smoothing", op.trace_smoothing);
  }
  if (root.has("fit")) {
    const auto f = root.child("fit");
    f.allow({"voxel_size", "max_rays", "init", "init_value"});
    f.get("voxel_size", cfg.fit.voxel_size);
    f.get("max_rays", cfg.fit.max_rays);
    f.get("init_value", cfg.fit.init_value);
    if (f.has("init")) {
      std::string init;
      f.get("init", init);
      if (init != "constant" && init != "tsdf") {
        throw InputError("fit.init: expected 'constant' or 'tsdf'");
      }
      cfg.fit.init_from_tsdf = init == "tsdf";
    }
  }
  if (root.has("ingest")) {
    const auto g = root.child("ingest");
    g.allow({"outlier_neighbors", "outlier_sigma", "side_weight"});
    g.get("outlier_neighbors", cfg.outlier_neighbors);
    g.get("outlier_sigma", cfg.outlier_sigma);
    g.get("side_weight", cfg.side_weight);
  }
  auto profile_ref = [&](const std::string& s) {
    if (is_preset_name(s)) return s;
    const fs::path p = resolve_path(base, s);
    return fs::exists(p) ? p.string() : s;
  };
  if (root.has("source_profile")) {
    root.get("source_profile", cfg.source_profile);
    cfg.source_profile = profile_ref(cfg.source_profile);
  }
  if (root.has("target_profiles")) {
    root.get("target_profiles", cfg.target_profiles);
    for (auto& p : cfg.target_profiles) p = profile_ref(p);
  }
  if (root.has("replay")) {
    const auto r = root.child("replay");
    r.allow({"ego_track", "tracks", "assets", "size_map", "pose_update"});
    opt_path(r, "ego_track", cfg.replay.ego_track);
    opt_path(r, "tracks", cfg.replay.tracks);
    opt_path(r, "assets", cfg.replay.assets);
    opt_path(r, "size_map", cfg.replay.size_map);
    if (r.has("pose_update")) {
      std::string mode;
      r.get("pose_update", mode);
      if (mode == "componentwise") cfg.replay.pose_update = PoseUpdate::Componentwise;
      else if (mode == "rigid") cfg.replay.pose_update = PoseUpdate::Rigid;
      else throw InputError("replay.pose_update: expected 'componentwise' or 'rigid'");
    }
  }
  if (root.has("simulate")) {
    const auto s = root.child("simulate");
    s.allow({"mesh"});
    opt_path(s, "mesh", cfg.simulate_mesh);
  }
  if (root.has("evaluate")) {
    const auto e = root.child("evaluate");
    e.allow({"truncation", "sequences"});
    e.get("truncation", cfg.truncation);
    if (e.has("sequences")) {
      const json& seqs = j["evaluate"]["sequences"];
      if (!seqs.is_array()) throw InputError("evaluate.sequences: expected a list");
      for (std::size_t i = 0; i < seqs.size(); ++i) {
        const Section s(seqs[i], "evaluate.sequences[" + std::to_string(i) + "]");
        s.allow({"id", "manifest", "mesh", "real", "simulated"});
        EvalSequence seq;
        s.get("id", seq.id);
        if (seq.id.empty()) throw InputError(s.field("id") + ": missing");
        opt_path(s, "manifest", seq.manifest);
        opt_path(s, "mesh", seq.mesh);
        opt_path(s, "real", seq.real_dir);
        opt_path(s, "simulated", seq.simulated_dir);
        const bool by_mesh = seq.manifest && seq.mesh;
        const bool by_dirs = seq.real_dir && seq.simulated_dir;
        if (by_mesh == by_dirs) {
          throw InputError(s.field("") + " needs either manifest+mesh or real+simulated");
        }
        cfg.eval_sequences.push_back(std::move(seq));
      }
    }
  }
  if (root.has("stats")) {
    const auto s = root.child("stats");
    s.allow({"bin_width"});
    s.get("bin_width", cfg.stats_bin_width);
  }
  if (root.has("output")) {
    std::string out;
    root.get("output", out);
    cfg.output_dir = resolve_path(base, out);
  }
  root.get("seed", cfg.seed);
  root.get("threads", cfg.threads);
  validate_config(cfg);
  return cfg;
}

void validate_config(const PipelineConfig& cfg) {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw InputError(msg);
  };
  auto wrap = [](auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
  };
  check(cfg.grid.voxel_size > 0.0, "grid.voxel_size: must be > 0");
  check(cfg.grid.padding >= 0.0, "grid.padding: must be >= 0");
  if (cfg.grid.dims) {
    for (int d : *cfg.grid.dims) check(d >= 2, "grid.dims: every entry must be >= 2");
  }
  check(cfg.tsdf.truncation_distance > 0.0, "tsdf.truncation_distance: must be > 0");
  check(cfg.tsdf.max_weight > 0.0, "tsdf.max_weight: must be > 0");
  wrap([&] {
    RenderConfig r = cfg.render;
    if (r.t_far == 0.0) r.t_far = r.t_near + 1.0;  // filled in from the grid later
    r.validate();
  });
  wrap([&] { cfg.optimizer.validate(); });
  check(cfg.fit.voxel_size > 0.0, "fit.voxel_size: must be > 0");
  check(cfg.fit.max_rays >= 1, "fit.max_rays: must be >= 1");
  check(cfg.outlier_sigma >= 0.0, "ingest.outlier_sigma: must be >= 0");
  check(cfg.side_weight > 0.0, "ingest.side_weight: must be > 0");
  check(cfg.truncation > 0.0 && cfg.truncation <= 1.0, "evaluate.truncation: must be in (0, 1]");
  check(cfg.stats_bin_width > 0.0, "stats.bin_width: must be > 0");
  check(cfg.threads >= 1, "threads: must be >= 1");
  if (!cfg.manifest.empty()) {
    check(fs::exists(cfg.manifest), "manifest: file not found: " + cfg.manifest.string());
  }
  resolve_profile(cfg.source_profile);
  for (const auto& p : cfg.target_profiles) resolve_profile(p);
  auto exists = [&](const std::optional<fs::path>& p, const char* field) {
    if (p) check(fs::exists(*p), std::string(field) + ": file not found: " + p->string());
  };
  exists(cfg.replay.ego_track, "replay.ego_track");
  exists(cfg.replay.tracks, "replay.tracks");
  exists(cfg.replay.assets, "replay.assets");
  exists(cfg.replay.size_map, "replay.size_map");
  for (std::size_t i = 0; i < cfg.eval_sequences.size(); ++i) {
    const auto& s = cfg.eval_sequences[i];
    const std::string f = "evaluate.sequences[" + std::to_string(i) + "]";
    exists(s.manifest, (f + ".manifest").c_str());
    exists(s.real_dir, (f + ".real").c_str());
    exists(s.simulated_dir, (f + ".simulated").c_str());
  }
}

// --- shared helpers ---------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

LoadedSequence load_nonempty_sequence(const fs::path& manifest) {
  if (manifest.empty()) throw InputError("manifest: not set in the config");
  LoadedSequence seq = load_sequence(manifest);
  if (seq.frames.empty()) throw InputError("manifest.frames: no frames in " + manifest.string());
  return seq;
}

std::size_t reference_slot(const LoadedSequence& seq) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < seq.frames.size(); ++i) {
    if (seq.frames[i].frame_index < seq.frames[best].frame_index) best = i;
  }
  return best;
}

// Sensor poses expressed in the reference (first) frame.
std::map<int, Pose6D> relative_sensor_poses(const LoadedSequence& seq) {
  const Pose6D& ref = seq.frames[reference_slot(seq)].sensor_pose;
  std::map<int, Pose6D> out;
  for (const auto& f : seq.frames) {
    out[f.frame_index] = transform_to_pose(to_reference(ref, f.sensor_pose));
  }
  return out;
}

struct CleanSequence {
  std::vector<Frame> frames;  // dynamic points and outliers removed, by frame_index
  PointCloud consolidated;
  std::size_t removed_outliers = 0;
};

CleanSequence clean_sequence(const LoadedSequence& seq, const PipelineConfig& cfg) {
  CleanSequence out;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    Frame f = seq.frames[i];
    f.cloud = remove_dynamic_points(seq.frames[i], seq.labels[i]);
    out.frames.push_back(std::move(f));
  }
  std::stable_sort(out.frames.begin(), out.frames.end(),
                   [](const Frame& a, const Frame& b) { return a.frame_index < b.frame_index; });
  const PointCloud registered = register_frames(out.frames);
  const auto keep = outlier_inliers(registered, cfg.outlier_neighbors, cfg.outlier_sigma);
  out.removed_outliers = registered.size() - keep.size();
  out.consolidated = registered.subset(keep);
  // register_frames concatenates frames in frame_index order, so the kept
  // indices split back into per-frame ranges.
  std::size_t offset = 0, k = 0;
  for (auto& f : out.frames) {
    const std::size_t n = f.cloud.size();
    std::vector<std::size_t> local;
    while (k < keep.size() && keep[k] < offset + n) local.push_back(keep[k++] - offset);
    f.cloud = f.cloud.subset(local);
    offset += n;
  }
  return out;
}

GridSpec grid_for(const PipelineConfig& cfg, const PointCloud& consolidated) {
  if (cfg.grid.origin) {
    GridSpec spec;
    spec.origin = *cfg.grid.origin;
    spec.voxel_size = cfg.grid.voxel_size;
    spec.dims = *cfg.grid.dims;
    spec.validate();
    return spec;
  }
  if (consolidated.empty()) throw InputError("manifest: no points left after cleaning");
  return GridSpec::covering(bounds_of(consolidated.points), cfg.grid.voxel_size, cfg.grid.padding);
}

PointCloud raycast_in_sensor_frame(const Bvh& bvh, const SensorProfile& profile,
                                   const Pose6D& platform, std::uint64_t seed, int threads) {
  PointCloud cloud = cast_scan(bvh, profile, platform, seed, threads).cloud;
  const RigidTransform sensor =
      compose(pose_to_transform(platform), pose_to_transform(profile.mount));
  cloud.transform(sensor.inverse());
  return cloud;
}

}  // namespace

// --- reconstruct ------------------------------------------------------------

ReconstructOutput cmd_reconstruct(const PipelineConfig& cfg) {
  validate_config(cfg);
  const LoadedSequence seq = load_nonempty_sequence(cfg.manifest);
  const SensorProfile source = resolve_profile(cfg.source_profile);

  ReconstructOutput out;
  const CleanSequence clean = clean_sequence(seq, cfg);
  out.consolidated_points = clean.consolidated.size();
  out.removed_outliers = clean.removed_outliers;
  const GridSpec spec = grid_for(cfg, clean.consolidated);

  const fs::path dir = cfg.output_dir / "reconstruct";
  fs::create_directories(dir);

  const bool want_tsdf = cfg.method != ReconMethod::VolumeFit;
  const bool want_fit = cfg.method != ReconMethod::Tsdf;
  std::optional<TsdfVolume> tsdf;
  TriangleMesh tsdf_mesh, fit_mesh;
  if (want_tsdf || cfg.fit.init_from_tsdf) tsdf = tsdf_fuse(clean.frames, spec, cfg.tsdf);
  if (want_tsdf) {
    tsdf_mesh = extract_mesh(tsdf->grid, 0.0, tsdf->weights);
    write_sdf_grid(tsdf->grid, dir / "tsdf.sdf");
    write_ply(tsdf_mesh, dir / "tsdf_mesh.ply");
    out.files.push_back(dir / "tsdf.sdf");
    out.files.push_back(dir / "tsdf_mesh.ply");
  }

  if (want_fit) {
    RayBundle bundle = build_ray_bundle(clean.frames, cfg.side_weight);
    std::vector<LidarRay> rays;
    if (bundle.rays.size() > cfg.fit.max_rays) {
      const CounterRng rng(stage_seed(cfg.seed, Stage::RaySubset), 0);
      std::vector<std::size_t> idx(bundle.rays.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::vector<std::uint64_t> keys(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) keys[i] = rng.bits(i);
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cfg.fit.max_rays),
                        idx.end(), [&](std::size_t a, std::size_t b) {
                          return keys[a] < keys[b] || (keys[a] == keys[b] && a < b);
                        });
      idx.resize(cfg.fit.max_rays);
      std::sort(idx.begin(), idx.end());
      for (std::size_t i : idx) rays.push_back(bundle.rays[i]);
    } else {
      rays = std::move(bundle.rays);
    }
    if (rays.empty()) throw InputError("manifest: no usable rays for volume fitting");
    out.rays = rays.size();

    const GridSpec fit_spec =
        GridSpec::covering(Aabb{spec.origin, spec.max_corner()}, cfg.fit.voxel_size, 0.0);
    SdfGrid init(fit_spec, cfg.fit.init_value);
    if (cfg.fit.init_from_tsdf) {
      const SdfGrid& src = tsdf->grid;
      init = SdfGrid::from_function(fit_spec, [&](const Vec3& p) { return sample_sdf(src, p).value; });
    }
    RenderConfig render = cfg.render;
    render.seed = stage_seed(cfg.seed, Stage::Fit);
    OptimizerConfig opt = cfg.optimizer;
    opt.seed = stage_seed(cfg.seed, Stage::Fit);
    opt.threads = cfg.threads;
    FitResult fit = fit_sdf(rays, init, render, opt);
    fit_mesh = extract_mesh(fit.grid, 0.0);
    write_sdf_grid(fit.grid, dir / "volume_fit.sdf");
    write_ply(fit_mesh, dir / "volume_fit_mesh.ply");
    std::string trace = "epoch,loss,smoothed\n";
    for (std::size_t e = 0; e < fit.loss_trace.size(); ++e) {
      trace += std::to_string(e) + "," + fmt(fit.loss_trace[e]) + "," +
               fmt(fit.smoothed_trace[e]) + "\n";
    }
    write_text(dir / "loss_trace.csv", trace);
    out.files.push_back(dir / "volume_fit.sdf");
    out.files.push_back(dir / "volume_fit_mesh.ply");
    out.files.push_back(dir / "loss_trace.csv");
    out.fit = std::move(fit);
  }

  if (cfg.method == ReconMethod::Both) {
    if (tsdf_mesh.empty() || fit_mesh.empty()) {
      throw NumericalError("cannot compare reconstructions: " +
                           std::string(tsdf_mesh.empty() ? "tsdf" : "volume-fit") +
                           " mesh is empty");
    }
    const Bvh a = build_bvh(tsdf_mesh);
    const Bvh b = build_bvh(fit_mesh);
    PointCloud ca, cb;
    for (const auto& [frame, pose] : relative_sensor_poses(seq)) {
      const auto seed = hash_combine(stage_seed(cfg.seed, Stage::Compare),
                                     static_cast<std::uint64_t>(frame));
      ca.append(cast_scan(a, source, pose, seed, cfg.threads).cloud);
      cb.append(cast_scan(b, source, pose, seed, cfg.threads).cloud);
    }
    if (ca.empty() || cb.empty()) throw NumericalError("comparison raycast returned no points");
    out.comparison = chamfer(ca, cb, cfg.truncation, cfg.threads);
    write_text(dir / "comparison.csv",
               "method_a,method_b,forward,backward,cd\ntsdf,volume-fit," +
                   fmt(out.comparison->forward_term) + "," + fmt(out.comparison->backward_term) +
                   "," + fmt(out.comparison->total) + "\n");
    out.files.push_back(dir / "comparison.csv");
  }
  return out;
}

// --- simulate ---------------------------------------------------------------

namespace {

fs::path default_mesh(const PipelineConfig& cfg) {
  const fs::path dir = cfg.output_dir / "reconstruct";
  for (const char* name : {"tsdf_mesh.ply", "volume_fit_mesh.ply"}) {
    if (fs::exists(dir / name)) return dir / name;
  }
  throw InputError("simulate.mesh: not set and no reconstructed mesh under " + dir.string());
}

}  // namespace

SimulateOutput cmd_simulate(const PipelineConfig& cfg, const std::optional<fs::path>& mesh_arg,
                            const std::vector<std::string>& profile_args) {
  validate_config(cfg);
  const fs::path mesh_path = mesh_arg ? *mesh_arg : cfg.simulate_mesh ? *cfg.simulate_mesh
                                                                       : default_mesh(cfg);
  if (!fs::exists(mesh_path)) throw InputError("mesh: file not found: " + mesh_path.string());
  const TriangleMesh background = read_ply_mesh(mesh_path);

  std::vector<SensorProfile> profiles;
  for (const auto& p : profile_args.empty() ? cfg.target_profiles : profile_args) {
    profiles.push_back(resolve_profile(p));
  }
  if (profiles.empty()) throw InputError("target_profiles: no profile to simulate");

  EgoTrack ego;
  if (cfg.replay.ego_track) {
    ego = read_ego_track(*cfg.replay.ego_track);
  } else {
    const LoadedSequence seq = load_nonempty_sequence(cfg.manifest);
    const int first = seq.frames[reference_slot(seq)].frame_index;
    for (const auto& f : seq.frames) ego.poses[f.frame_index - first] = f.sensor_pose;
  }
  const std::vector<TrackedObject> objects =
      cfg.replay.tracks ? read_tracks(*cfg.replay.tracks) : std::vector<TrackedObject>{};
  const std::vector<Asset> library =
      cfg.replay.assets ? read_asset_manifest(*cfg.replay.assets) : default_asset_library();
  const std::optional<SizeMap> size_map =
      cfg.replay.size_map ? std::optional<SizeMap>(read_size_map(*cfg.replay.size_map))
                          : std::nullopt;

  // Resolve every placement before writing anything.
  std::map<int, std::vector<Placement>> placements;
  for (const auto& [t, _] : ego.poses) {
    auto& list = placements[t];
    for (const auto& obj : objects) {
      if (!obj.relative_poses.count(t)) continue;
      Placement p;
      p.object_id = obj.object_id;
      p.size = size_map ? map_size(obj.size, obj.class_name, *size_map) : obj.size;
      p.asset = match_asset(library, obj.class_name, p.size);
      p.pose = target_pose_at(obj, ego, t, cfg.replay.pose_update);
      list.push_back(std::move(p));
    }
  }

  SimulateOutput out;
  const fs::path root = cfg.output_dir / "simulate";
  fs::create_directories(root);
  const Bvh background_bvh = build_bvh(background);
  for (const auto& profile : profiles) {
    const fs::path dir = root / profile.name;
    fs::create_directories(dir);
    for (const auto& [t, list] : placements) {
      const Pose6D platform = ego_pose_at(ego, t, cfg.replay.pose_update);
      const Pose6D sensor_pose = transform_to_pose(
          compose(pose_to_transform(platform), pose_to_transform(profile.mount)));
      const auto seed =
          hash_combine(stage_seed(cfg.seed, Stage::Simulate), static_cast<std::uint64_t>(t));
      std::optional<Bvh> frame_bvh;
      if (!list.empty()) frame_bvh = build_bvh(compose_frame(background, list));
      const Bvh& bvh = frame_bvh ? *frame_bvh : background_bvh;
      const SimulatedScan scan = cast_scan(bvh, profile, platform, seed, cfg.threads);
      PointCloud cloud = scan.cloud;
      cloud.transform(pose_to_transform(sensor_pose).inverse());

      char name[64];
      std::snprintf(name, sizeof(name), "frame_%06d.ply", t);
      write_ply(cloud, dir / name);
      out.files.push_back(dir / name);
      std::snprintf(name, sizeof(name), "labels_%06d.txt", t);
      write_text(dir / name, export_labels(list, t, sensor_pose));
      out.files.push_back(dir / name);
      out.frames.push_back({profile.name, t, cloud.size(), scan.dropped_count, scan.miss_count,
                            list.size()});
    }
  }
  std::string summary = "profile,frame,points,dropped,missed,objects\n";
  for (const auto& f : out.frames) {
    summary += f.profile + "," + std::to_string(f.frame) + "," + std::to_string(f.points) + "," +
               std::to_string(f.dropped) + "," + std::to_string(f.missed) + "," +
               std::to_string(f.objects) + "\n";
  }
  write_text(root / "summary.csv", summary);
  out.files.push_back(root / "summary.csv");
  return out;
}

// --- evaluate ---------------------------------------------------------------

FrameScore score_scan_pair(const PointCloud& real, const PointCloud& simulated, double truncation,
                           int threads) {
  FrameScore s;
  s.cd = chamfer(real, simulated, truncation, threads).total;
  std::vector<double> a, b;
  if (real.has_beam_id() && real.has_azimuth_step() && simulated.has_beam_id() &&
      simulated.has_azimuth_step()) {
    auto range_of = [](const PointCloud& c, std::size_t i) {
      return c.has_range() ? c.range[i] : c.points[i].norm();
    };
    std::map<std::pair<std::int32_t, std::int32_t>, double> sim;
    for (std::size_t i = 0; i < simulated.size(); ++i) {
      sim.emplace(std::make_pair(simulated.beam_id[i], simulated.azimuth_step[i]),
                  range_of(simulated, i));
    }
    for (std::size_t i = 0; i < real.size(); ++i) {
      auto it = sim.find({real.beam_id[i], real.azimuth_step[i]});
      if (it == sim.end()) continue;
      a.push_back(it->second);
      b.push_back(range_of(real, i));
    }
  }
  s.matched_rays = a.size();
  if (a.empty()) {
    s.rmse = s.unsquared_rmse = std::numeric_limits<double>::quiet_NaN();
  } else {
    s.rmse = rmse_depth(a, b);
    s.unsquared_rmse = unsquared_rmse(a, b);
  }
  return s;
}

namespace {

std::vector<fs::path> ply_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw InputError(dir.string() + ": not a directory");
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ply") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

FrameScore aggregate(const std::string& id, const std::vector<FrameScore>& frames) {
  FrameScore agg;
  agg.sequence_id = id;
  agg.frame = "all";
  double cd = 0.0, sq = 0.0, signed_sum = 0.0;
  for (const auto& f : frames) {
    cd += f.cd;
    if (f.matched_rays == 0) continue;
    const double n = static_cast<double>(f.matched_rays);
    sq += f.rmse * f.rmse * n;
    if (!std::isnan(f.unsquared_rmse)) signed_sum += f.unsquared_rmse * f.unsquared_rmse * n;
    agg.matched_rays += f.matched_rays;
  }
  agg.cd = cd / static_cast<double>(frames.size());
  if (agg.matched_rays == 0) {
    agg.rmse = agg.unsquared_rmse = std::numeric_limits<double>::quiet_NaN();
  } else {
    const double n = static_cast<double>(agg.matched_rays);
    agg.rmse = std::sqrt(sq / n);
    agg.unsquared_rmse = std::sqrt(signed_sum / n);
  }
  return agg;
}

}  // namespace

EvaluateOutput cmd_evaluate(const PipelineConfig& cfg) {
  validate_config(cfg);
  std::vector<EvalSequence> sequences = cfg.eval_sequences;
  if (sequences.empty()) {
    const fs::path dir = cfg.output_dir / "reconstruct";
    for (const auto& [id, name] : {std::pair{"tsdf", "tsdf_mesh.ply"},
                                   std::pair{"volume-fit", "volume_fit_mesh.ply"}}) {
      if (!fs::exists(dir / name)) continue;
      EvalSequence s;
      s.id = id;
      s.manifest = cfg.manifest;
      s.mesh = dir / name;
      sequences.push_back(s);
    }
    if (sequences.empty()) {
      throw InputError("evaluate.sequences: none configured and no reconstructed mesh under " +
                       dir.string());
    }
  }
  const SensorProfile source = resolve_profile(cfg.source_profile);

  // Load and pair everything first so a bad input writes nothing.
  struct Pair {
    std::string frame;
    PointCloud real;
    PointCloud simulated;
  };
  std::vector<std::vector<Pair>> pairs(sequences.size());
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    const auto& seq = sequences[s];
    if (seq.real_dir) {
      const auto real = ply_files(*seq.real_dir);
      const auto sim = ply_files(*seq.simulated_dir);
      if (real.size() != sim.size()) {
        throw InputError("sequence " + seq.id + ": " + std::to_string(real.size()) +
                         " real vs " + std::to_string(sim.size()) + " simulated scans");
      }
      for (std::size_t i = 0; i < real.size(); ++i) {
        pairs[s].push_back({real[i].stem().string(), read_ply_cloud(real[i]),
                            read_ply_cloud(sim[i])});
      }
    } else {
      if (!fs::exists(*seq.mesh)) throw InputError("sequence " + seq.id + ": mesh not found");
      const LoadedSequence loaded = load_nonempty_sequence(*seq.manifest);
      const Bvh bvh = build_bvh(read_ply_mesh(*seq.mesh));
      const auto rel = relative_sensor_poses(loaded);
      for (std::size_t i = 0; i < loaded.frames.size(); ++i) {
        const Frame& f = loaded.frames[i];
        const auto seed = hash_combine(stage_seed(cfg.seed, Stage::Compare),
                                       static_cast<std::uint64_t>(f.frame_index));
        // the source sensor sits at the platform pose itself
        SensorProfile at_platform = source;
        at_platform.mount = Pose6D{};
        // score the geometry, not the sensor's noise model
        at_platform.range_noise_sigma = 0.0;
        at_platform.drop_rate = 0.0;
        pairs[s].push_back({std::to_string(f.frame_index), remove_dynamic_points(f, loaded.labels[i]),
                            raycast_in_sensor_frame(bvh, at_platform, rel.at(f.frame_index), seed,
                                                    cfg.threads)});
      }
    }
    if (pairs[s].empty()) throw InputError("sequence " + seq.id + ": no paired frames");
    for (const auto& p : pairs[s]) {
      if (p.real.empty() || p.simulated.empty()) {
        throw InputError("sequence " + seq.id + ", frame " + p.frame + ": empty scan");
      }
    }
  }

  EvaluateOutput out;
  std::vector<SequenceScore> summary;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    std::vector<FrameScore> frames;
    for (const auto& p : pairs[s]) {
      FrameScore f = score_scan_pair(p.real, p.simulated, cfg.truncation, cfg.threads);
      f.sequence_id = sequences[s].id;
      f.frame = p.frame;
      frames.push_back(f);
    }
    const FrameScore agg = aggregate(sequences[s].id, frames);
    out.scores.insert(out.scores.end(), frames.begin(), frames.end());
    out.scores.push_back(agg);
    summary.push_back({agg.sequence_id, agg.rmse, agg.cd});
  }
  out.ranking = rank_sequences(summary);

  const fs::path dir = cfg.output_dir / "evaluate";
  fs::create_directories(dir);
  std::string table = "sequence_id,frame,rmse,cd,matched_rays\n";
  for (const auto& f : out.scores) {
    table += f.sequence_id + "," + f.frame + "," + fmt(f.rmse) + "," + fmt(f.cd) + "," +
             std::to_string(f.matched_rays) + "\n";
  }
  write_text(dir / "scores.csv", table);
  write_text(dir / "ranking.csv", scores_csv(out.ranking));
  out.files = {dir / "scores.csv", dir / "ranking.csv"};
  return out;
}

// --- stats ------------------------------------------------------------------

std::vector<BoxLabel> read_any_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open label file " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::size_t fields = 0;
    for (std::string tok; ss >> tok;) ++fields;
    if (fields == 9) return read_labels(path);
    if (fields != 8) break;
    std::vector<BoxLabel> out;
    for (const auto& e : read_exported_labels(path)) {
      BoxLabel b;
      b.class_name = e.class_name;
      b.size = e.size;
      b.center = e.bottom_center + Vec3(0.0, 0.0, 0.5 * e.size.z());
      b.yaw = e.yaw;
      out.push_back(b);
    }
    return out;
  }
  // Empty file, or neither layout: the ingest parser returns nothing or
  // reports the offending line.
  return read_labels(path);
}

StatsOutput cmd_stats(const std::vector<fs::path>& files, double bin_width,
                      const fs::path& output_dir) {
  if (files.empty()) throw InputError("stats: no label files given");
  if (!(bin_width > 0.0)) throw InputError("stats.bin_width: must be > 0");
  StatsOutput out;
  for (const auto& f : files) {
    out.histograms.push_back(size_distribution(read_any_labels(f), bin_width));
  }
  const std::size_t n = files.size();
  out.divergence.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      out.divergence[i][k] = distribution_divergence(out.histograms[i], out.histograms[k]);
    }
  }
  const fs::path dir = output_dir / "stats";
  fs::create_directories(dir);
  std::string matrix = "file";
  for (const auto& f : files) matrix += "," + f.filename().string();
  matrix += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    const fs::path hist = dir / ("hist_" + std::to_string(i) + "_" + files[i].stem().string() + ".csv");
    write_text(hist, histogram_csv(out.histograms[i]));
    out.files.push_back(hist);
    matrix += files[i].filename().string();
    for (double d : out.divergence[i]) matrix += "," + fmt(d);
    matrix += "\n";
  }
  write_text(dir / "divergence.csv", matrix);
  out.files.push_back(dir / "divergence.csv");
  return out;
}

std::string presets_table() {
  std::string out =
      "name,channels,vfov_min_deg,vfov_max_deg,rotation_rate_hz,points_per_second,"
      "azimuth_steps,max_range,drop_rate,range_noise_sigma\n";
  for (const auto& name : preset_names()) {
    const SensorProfile p = preset(name);
    out += p.name + "," + std::to_string(p.channels) + "," + fmt(p.vfov_min_deg) + "," +
           fmt(p.vfov_max_deg) + "," + fmt(p.rotation_rate_hz) + "," + fmt(p.points_per_second) +
           "," + std::to_string(p.azimuth_steps_per_rotation()) + "," + fmt(p.max_range) + "," +
           fmt(p.drop_rate) + "," + fmt(p.range_noise_sigma) + "\n";
  }
  return out;
}

// --- demo data --------------------------------------------------------------

void write_demo_sequence(const fs::path& dir, const DemoOptions& opt) {
  if (opt.frames < 1) throw InputError("demo: frames must be >= 1");
  SensorProfile profile = resolve_profile(opt.profile);
  if (opt.range_noise >= 0.0) profile.range_noise_sigma = opt.range_noise;
  fs::create_directories(dir);

  const TriangleMesh scene = demo_scene().mesh();
  const Vec3 vehicle_size(4.5, 1.9, 1.6);
  const TriangleMesh vehicle = make_grounded_box(vehicle_size);

  std::vector<ManifestEntry> manifest;
  EgoTrack ego;
  TrackedObject car;
  car.object_id = "car-0";
  car.class_name = ObjectClass::Vehicle;
  car.size = vehicle_size;

  for (int i = 0; i < opt.frames; ++i) {
    const Pose6D sensor = make_pose(-2.27 + 2.0 * i, 0.33 + 0.5 * i, 1.73, 0.0, 0.05 * i, 0.0);
    const Pose6D car_pose = make_pose(-6.0 + 3.0 * i, 7.5, 0.0, 0.0, 0.0, 0.0);
    TriangleMesh world = scene;
    if (opt.moving_vehicle) {
      TriangleMesh v = vehicle;
      v.transform(pose_to_transform(car_pose));
      world.append(v);
    }
    const auto seed = hash_combine(opt.seed, static_cast<std::uint64_t>(i));
    PointCloud cloud =
        raycast_in_sensor_frame(build_bvh(world), profile, sensor, seed, 1);

    char name[64];
    std::snprintf(name, sizeof(name), "frame_%04d.ply", i);
    write_ply(cloud, dir / name);
    ManifestEntry e;
    e.cloud = name;
    e.pose = sensor;
    e.timestamp = 0.1 * i;
    e.frame_index = i;
    if (opt.moving_vehicle) {
      // Label box in the sensor frame, slightly enlarged to swallow noise.
      const RigidTransform to_sensor = pose_to_transform(sensor).inverse();
      BoxLabel b;
      b.class_name = ObjectClass::Vehicle;
      b.center = to_sensor.apply(car_pose.position() + Vec3(0, 0, 0.5 * vehicle_size.z()));
      b.size = vehicle_size + Vec3::Constant(0.3);
      b.yaw = wrap_angle(car_pose.yaw - sensor.yaw);
      b.is_dynamic = true;
      b.frame_index = i;
      std::snprintf(name, sizeof(name), "labels_%04d.txt", i);
      write_labels(std::span<const BoxLabel>(&b, 1), dir / name);
      e.labels = name;
    }
    manifest.push_back(e);
    ego.poses[i] = sensor;
    car.relative_poses[i] = pose_difference(car_pose, sensor);
  }
  write_manifest(manifest, dir / "manifest.json");
  write_ego_track(ego, dir / "ego.txt");
  if (opt.moving_vehicle) {
    write_tracks(std::span<const TrackedObject>(&car, 1), dir / "tracks.txt");
  }

  json cfg = {
      {"manifest", "manifest.json"},
      {"grid", {{"voxel_size", 0.15}, {"padding", 1.0}}},
      {"method", "tsdf"},
      {"tsdf", {{"truncation_distance", 0.45}}},
      {"fit", {{"voxel_size", 0.3}, {"max_rays", 4000}}},
      {"optimizer", {{"epochs", 60}, {"batch_size", 1000}}},
      {"source_profile", opt.profile},
      {"target_profiles", {"kitti", "nuscenes"}},
      {"replay", {{"ego_track", "ego.txt"}, {"pose_update", "componentwise"}}},
      {"output", "out"},
      {"seed", opt.seed},
  };
  if (opt.moving_vehicle) cfg["replay"]["tracks"] = "tracks.txt";
  write_text(dir / "config.json", cfg.dump(2) + "\n");
}

}  // namespace resim

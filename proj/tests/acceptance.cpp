// Acceptance run: one PASS/FAIL line per criterion. argv[1] is the resim
// executable, used for the end-to-end determinism check.
#include "resim/bvh.hpp"
#include "resim/lidar_sim.hpp"
#include "resim/metrics.hpp"
#include "resim/pipeline.hpp"
#include "resim/scene_replay.hpp"
#include "resim/sdf_fit.hpp"
#include "resim/shapes.hpp"
#include "resim/volume_render.hpp"

#include "test_util.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace resim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Five static 64-beam scans of the synthetic scene.
fs::path scene_sequence(const fs::path& dir, double noise = -1.0) {
  DemoOptions opt;
  opt.seed = 1;
  opt.frames = 5;
  opt.profile = "waymo-top";
  opt.range_noise = noise;
  opt.moving_vehicle = false;
  write_demo_sequence(dir, opt);
  return dir / "config.json";
}

PipelineConfig scene_config(const fs::path& config, const fs::path& out) {
  PipelineConfig cfg = load_pipeline_config(config);
  cfg.grid.voxel_size = 0.1;
  cfg.tsdf.truncation_distance = 0.3;
  cfg.method = ReconMethod::Tsdf;
  cfg.output_dir = out;
  cfg.threads = 1;
  return cfg;
}

const FrameScore& aggregate_row(const EvaluateOutput& ev, const std::string& id) {
  for (const auto& s : ev.scores) {
    if (s.sequence_id == id && s.frame == "all") return s;
  }
  throw std::runtime_error("no aggregate row for " + id);
}

const fs::path kRoot = fs::path(RESIM_TEST_TMP) / "acceptance";

Outcome a1_closed_loop() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  const auto config = scene_sequence(kRoot / "scene");
  PipelineConfig cfg = scene_config(config, kRoot / "a1");
  cmd_reconstruct(cfg);
  const auto ev = cmd_evaluate(cfg);
  const double cd = aggregate_row(ev, "tsdf").cd;
  const double secs = seconds_since(t0);
  o.require(cd <= 0.03, "CD " + num(cd) + " > 0.03");
  o.require(secs < 120.0, "runtime " + num(secs) + " s");
  o.note("truncated CD " + num(cd) + " m^2 over 5 frames, " + num(secs) + " s");
  return o;
}

Outcome a2_volume_fit() {
  Outcome o;
  PipelineConfig cfg = scene_config(kRoot / "scene/config.json", kRoot / "a2");
  cfg.method = ReconMethod::VolumeFit;
  cfg.fit.max_rays = 2000;
  cfg.optimizer.epochs = 200;
  const auto rec = cmd_reconstruct(cfg);
  const FitResult& fit = *rec.fit;
  const double initial = fit.initial_loss;
  const double final_smoothed = fit.smoothed_trace.back();
  const double ratio = final_smoothed / initial;
  o.require(rec.rays == 2000, "rays " + std::to_string(rec.rays));
  o.require(fit.loss_trace.size() <= 200, "epochs");
  o.require(ratio <= 0.1, "smoothed loss ratio " + num(ratio) + " > 0.1");
  o.note("loss " + num(initial) + " -> " + num(final_smoothed) + " (ratio " + num(ratio) + ")");

  // Gradient check on the fitted grid with the same supervision rays.
  const LoadedSequence seq = load_sequence(cfg.manifest);
  const RayBundle bundle = build_ray_bundle(seq.frames, cfg.side_weight);
  std::vector<LidarRay> rays;
  const std::size_t stride = std::max<std::size_t>(1, bundle.rays.size() / 2000);
  for (std::size_t i = 0; i < bundle.rays.size() && rays.size() < 2000; i += stride) rays.push_back(bundle.rays[i]);
  RenderConfig render = cfg.render.resolved_for(fit.grid.spec());
  render.sigmoid_scale = fit.sigmoid_scale;
  OptimizerConfig opt = cfg.optimizer;
  const SdfGrid& g = fit.grid;
  const auto full = evaluate_objective(g, rays, render, opt);
  double biggest = 0;
  for (double v : full.d_values) biggest = std::max(biggest, std::abs(v));
  std::vector<std::size_t> touched;
  for (std::size_t i = 0; i < full.d_values.size(); ++i) {
    if (std::abs(full.d_values[i]) > 1e-3 * biggest) touched.push_back(i);
  }
  test::Draws d(2);
  const double h = 1e-4;
  double worst = 0;
  for (int n = 0; n < 20 && !touched.empty(); ++n) {
    const std::size_t idx = touched[static_cast<std::size_t>(d.uniform(0, 1) * touched.size()) % touched.size()];
    SdfGrid up = g, dn = g;
    up.values()[idx] += h;
    dn.values()[idx] -= h;
    const double fd = (evaluate_objective(up, rays, render, opt).terms.total -
                       evaluate_objective(dn, rays, render, opt).terms.total) / (2 * h);
    worst = std::max(worst, std::abs(fd - full.d_values[idx]) /
                                std::max(std::abs(fd), std::abs(full.d_values[idx])));
  }
  o.require(!touched.empty(), "no voxel carries gradient");
  o.require(worst < 1e-4, "gradient relative error " + num(worst));
  o.note("worst gradient relative error " + num(worst) + " on 20 voxels");
  return o;
}

Outcome a3_rendering() {
  Outcome o;
  auto check_invariants = [&](const RaySampleSet& r) {
    bool ok = r.transmittances.front() == 1.0 && r.opacity >= 0.0 && r.opacity <= 1.0;
    double wsum = 0;
    for (std::size_t i = 0; i < r.alphas.size(); ++i) {
      ok = ok && r.alphas[i] >= 0.0 && r.alphas[i] <= 1.0;
      if (i + 1 < r.alphas.size()) {
        ok = ok && r.transmittances[i + 1] <= r.transmittances[i] &&
             std::abs(r.transmittances[i + 1] - r.transmittances[i] * (1 - r.alphas[i])) <= 1e-12;
      }
      wsum += r.transmittances[i] * r.alphas[i];
    }
    return ok && std::abs(wsum - r.opacity) <= 1e-9;
  };
  RenderConfig cfg;
  cfg.num_samples = 512;
  cfg.sigmoid_scale = 200.0;
  cfg.t_near = 0.3;
  cfg.t_far = 9.0;

  GridSpec ps;
  ps.origin = {-3, -3, -3};
  ps.voxel_size = 0.1;
  ps.dims = {61, 61, 91};
  const SdfGrid plane = SdfGrid::from_function(ps, [](const Vec3& x) { return x.z(); });
  GridSpec ss;
  ss.origin = {-6, -6, -6};
  ss.voxel_size = 0.1;
  ss.dims = {121, 121, 121};
  const SdfGrid sphere = SdfGrid::from_function(ss, [](const Vec3& x) { return x.norm() - 2.0; });

  struct Case {
    const SdfGrid* grid;
    Vec3 origin, dir;
    double depth;
    const char* name;
  };
  const Vec3 slant = Vec3(0.3, 0.2, -1).normalized();
  const std::vector<Case> cases = {
      {&plane, {0.1, 0.2, 5}, {0, 0, -1}, 5.0, "plane"},
      {&plane, {-1, -0.5, 5}, slant, 5.0 / -slant.z(), "slanted plane"},
      {&sphere, {-5, 0, 0}, {1, 0, 0}, 3.0, "sphere"},
      {&sphere, {-5, 1, 0}, {1, 0, 0}, 5.0 - std::sqrt(3.0), "sphere chord"},
      {&sphere, {0, 0, 5.5}, {0, 0, -1}, 3.5, "sphere top"},
  };
  double worst = 0;
  for (const auto& c : cases) {
    const auto r = render_depth(*c.grid, c.origin, c.dir, cfg);
    const double rel = std::abs(r.rendered_depth - c.depth) / c.depth;
    worst = std::max(worst, rel);
    o.require(rel <= 0.01, std::string(c.name) + " depth " + num(r.rendered_depth) + " vs " + num(c.depth));
    o.require(check_invariants(r), std::string(c.name) + " invariants");
  }
  test::Draws d(3);
  int bad = 0;
  const int n = 300;
  for (int i = 0; i < n; ++i) {
    RenderConfig rc = cfg;
    rc.stratified = i % 2 == 1;
    rc.sigmoid_scale = d.uniform(1, 300);
    const Vec3 o_ = d.vec(-5, 5);
    const Vec3 dir = d.vec(-1, 1).normalized();
    if (!check_invariants(render_depth(i % 3 ? sphere : plane, o_, dir, rc, i))) ++bad;
  }
  o.require(bad == 0, std::to_string(bad) + " rays break invariants");
  o.note("worst depth error " + num(100 * worst) + "%, invariants on " + std::to_string(n + cases.size()) + " rays");
  return o;
}

Outcome a4_profiles() {
  Outcome o;
  auto scene = make_plane(60.0, -1.8, 8);
  scene.append(make_icosphere(Vec3::Zero(), 40.0, 3));
  const Bvh bvh = build_bvh(scene);
  const Pose6D platform = make_pose(0.5, -0.5, 0.2, 0.02, 0.3, -0.01);
  const std::pair<const char*, std::pair<double, double>> bounds[] = {
      {"kitti", {-24.9, 2.0}}, {"nuscenes", {-30.67, 10.67}}, {"waymo-top", {-17.6, 2.4}}};
  for (const auto& [name, range] : bounds) {
    const SensorProfile p = preset(name);
    const auto scan = cast_scan(bvh, p, platform, 4);
    const RigidTransform inv = compose(pose_to_transform(platform), pose_to_transform(p.mount)).inverse();
    const double lo = deg_to_rad(range.first) - 1e-9, hi = deg_to_rad(range.second) + 1e-9;
    std::size_t outside = 0;
    for (const auto& x : scan.cloud.points) {
      const double e = elevation_of(inv.apply(x));
      if (e < lo || e > hi) ++outside;
    }
    o.require(scan.cloud.size() > 10000, std::string(name) + " too few points");
    o.require(outside == 0, std::string(name) + ": " + std::to_string(outside) + " points outside");
  }
  const SensorProfile carla = preset("carla-default-32");
  const auto pattern = beam_pattern(carla);
  const std::set<double> distinct(pattern.begin(), pattern.end());
  o.require(distinct.size() == 32, "carla has " + std::to_string(distinct.size()) + " elevations");
  double spacing_err = std::abs(rad_to_deg(pattern.front()) + 30.0) + std::abs(rad_to_deg(pattern.back()) - 10.0);
  for (std::size_t i = 0; i + 1 < pattern.size(); ++i) {
    spacing_err = std::max(spacing_err, std::abs(rad_to_deg(pattern[i + 1] - pattern[i]) - 40.0 / 31.0));
  }
  o.require(spacing_err < 1e-9, "carla spacing error " + num(spacing_err));
  // and the scan itself uses all 32 beams at those elevations
  const auto scan = cast_scan(bvh, carla, platform, 5);
  const RigidTransform inv = compose(pose_to_transform(platform), pose_to_transform(carla.mount)).inverse();
  std::set<int> beams;
  double beam_err = 0;
  for (std::size_t i = 0; i < scan.cloud.size(); ++i) {
    const int b = scan.cloud.beam_id[i];
    beams.insert(b);
    beam_err = std::max(beam_err, std::abs(elevation_of(inv.apply(scan.cloud.points[i])) - pattern[b]));
  }
  o.require(beams.size() == 32, "carla scan uses " + std::to_string(beams.size()) + " beams");
  o.require(beam_err < 1e-6, "carla beam elevation error " + num(beam_err));
  o.note("3 presets inside their vFoV, carla 32 beams spaced " + num(40.0 / 31.0) + " deg");
  return o;
}

Outcome a5_raycast() {
  Outcome o;
  test::Draws d(5);
  TriangleMesh soup;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 c = d.vec(-20, 20);
    const auto base = static_cast<std::uint32_t>(soup.vertices.size());
    for (int v = 0; v < 3; ++v) soup.vertices.push_back(c + d.vec(-1, 1));
    soup.triangles.push_back({base, base + 1, base + 2});
  }
  const Bvh bvh = build_bvh(soup);
  int mismatches = 0, hits = 0;
  for (int r = 0; r < 1000; ++r) {
    const Vec3 origin = d.vec(-25, 25);
    const Vec3 dir = d.vec(-1, 1).normalized();
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t best_tri = UINT32_MAX;
    for (std::uint32_t t = 0; t < soup.triangles.size(); ++t) {
      const auto& tri = soup.triangles[t];
      const auto h = ray_triangle_intersect(origin, dir, soup.vertices[tri[0]], soup.vertices[tri[1]],
                                            soup.vertices[tri[2]]);
      if (h && *h < best) {
        best = *h;
        best_tri = t;
      }
    }
    const auto got = bvh.intersect(origin, dir);
    if (got.has_value() != std::isfinite(best)) {
      ++mismatches;
    } else if (got) {
      ++hits;
      if (std::abs(got->distance - best) > 1e-9 || got->triangle != best_tri) ++mismatches;
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " BVH mismatches");
  o.require(hits > 100, "only " + std::to_string(hits) + " hits");

  SensorProfile p;
  p.name = "drop";
  p.channels = 100;
  p.vfov_min_deg = -60;
  p.vfov_max_deg = 60;
  p.points_per_second = 10.0 * 100 * 1000;
  p.drop_rate = 0.5;
  const auto scan = cast_scan(build_bvh(make_icosphere(Vec3::Zero(), 10.0, 2)), p, Pose6D{}, 17);
  const double n = static_cast<double>(scan.rays_cast - scan.miss_count);
  const double kept = static_cast<double>(scan.cloud.size());
  const double z = (kept - 0.5 * n) / std::sqrt(n * 0.25);
  o.require(n >= 100000, "only " + num(n) + " rays");
  o.require(std::abs(z) <= 3.0, "survival z-score " + num(z));
  o.note(std::to_string(hits) + "/1000 hits agree with brute force; survival " + num(kept / n) +
         " (z=" + num(z) + ")");
  return o;
}

Outcome a6_replay() {
  Outcome o;
  auto wrap_by_turns = [](double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
  };
  test::Draws d(6);
  std::size_t mismatches = 0, checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    EgoTrack ego;
    TrackedObject obj;
    for (int t = 0; t < 50; ++t) {
      ego.poses[t] = d.pose(50);
      obj.relative_poses[t] = d.pose(30);
    }
    const Pose6D& l0 = ego.poses.at(0);
    for (int t = 0; t < 50; ++t) {
      const Pose6D& lt = ego.poses.at(t);
      const Pose6D& rel = obj.relative_poses[t];
      const Pose6D got = target_pose_at(obj, ego, t);
      const bool same = got.x == rel.x + (lt.x - l0.x) && got.y == rel.y + (lt.y - l0.y) &&
                        got.z == rel.z + (lt.z - l0.z) &&
                        got.roll == wrap_by_turns(rel.roll + wrap_by_turns(lt.roll - l0.roll)) &&
                        got.yaw == wrap_by_turns(rel.yaw + wrap_by_turns(lt.yaw - l0.yaw)) &&
                        got.pitch == wrap_by_turns(rel.pitch + wrap_by_turns(lt.pitch - l0.pitch));
      if (!same) ++mismatches;
      ++checked;
    }
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " pose mismatches");

  EgoTrack still;
  TrackedObject obj;
  const Pose6D fixed = d.pose(50);
  for (int t = 0; t < 50; ++t) {
    still.poses[t] = fixed;
    obj.relative_poses[t] = d.pose(30);
  }
  std::size_t moved = 0;
  for (int t = 0; t < 50; ++t) {
    const Pose6D q = target_pose_at(obj, still, t);
    const Pose6D& l = obj.relative_poses[t];
    if (!(q.x == l.x && q.y == l.y && q.z == l.z && q.roll == l.roll && q.yaw == l.yaw && q.pitch == l.pitch)) ++moved;
  }
  o.require(moved == 0, std::to_string(moved) + " frames differ under a still ego");
  o.note(std::to_string(checked) + " poses match the scalar oracle exactly; still ego leaves 50 frames unchanged");
  return o;
}

Outcome a7_metrics() {
  Outcome o;
  const std::vector<Vec3> p{{0, 0, 0}}, q{{1, 0, 0}};
  o.require(chamfer(p, q, 1.0).total == 2.0, "two-point CD");
  test::Draws d(7);
  std::vector<Vec3> a, b;
  for (int i = 0; i < 500; ++i) a.push_back(d.vec(-3, 3));
  for (int i = 0; i < 450; ++i) b.push_back(d.vec(-3, 3));
  o.require(chamfer(a, a, 0.97).total == 0.0, "self CD");
  const double base = chamfer(a, b, 1.0).total;
  double scale_err = 0, rigid_err = 0;
  for (double s : {0.3, 2.0, 5.0}) {
    std::vector<Vec3> sa, sb;
    for (const auto& x : a) sa.push_back(s * x);
    for (const auto& x : b) sb.push_back(s * x);
    scale_err = std::max(scale_err, std::abs(chamfer(sa, sb, 1.0).total - s * s * base));
  }
  for (int i = 0; i < 5; ++i) {
    const RigidTransform t = pose_to_transform(d.pose(20));
    std::vector<Vec3> ta, tb;
    for (const auto& x : a) ta.push_back(t.apply(x));
    for (const auto& x : b) tb.push_back(t.apply(x));
    rigid_err = std::max(rigid_err, std::abs(chamfer(ta, tb, 1.0).total - base));
  }
  o.require(scale_err <= 1e-9, "scale law error " + num(scale_err));
  o.require(rigid_err <= 1e-9, "rigid invariance error " + num(rigid_err));
  const std::vector<double> r{3, -4}, zero{0, 0};
  const double rmse = rmse_depth(r, zero);
  o.require(std::abs(rmse - std::sqrt(12.5)) <= 1e-15, "rmse " + num(rmse));
  o.note("scale error " + num(scale_err) + ", rigid error " + num(rigid_err));
  return o;
}

Outcome a8_ranking() {
  Outcome o;
  const double sigmas[] = {0.0, 0.02, 0.05, 0.1, 0.2};
  std::vector<SequenceScore> scores;
  for (double sigma : sigmas) {
    const std::string id = "sigma_" + num(sigma);
    const auto config = scene_sequence(kRoot / ("a8_" + id), sigma);
    PipelineConfig cfg = scene_config(config, kRoot / ("a8_" + id) / "out");
    cmd_reconstruct(cfg);
    const auto row = aggregate_row(cmd_evaluate(cfg), "tsdf");
    scores.push_back({id, row.rmse, row.cd});
    o.note(id + " rmse " + num(row.rmse) + " cd " + num(row.cd));
  }
  // feed in reverse so the order cannot come from the input
  std::reverse(scores.begin(), scores.end());
  const auto ranked = rank_sequences(scores);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    o.require(ranked[i].sequence_id == "sigma_" + num(sigmas[i]), "rank " + std::to_string(i) + " is " + ranked[i].sequence_id);
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome a9_determinism(const std::string& cli) {
  Outcome o;
  const fs::path dir = kRoot / "a9";
  fs::remove_all(dir);
  auto run = [&](const std::string& args) {
    const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null";
    const int rc = std::system(cmd.c_str());
    o.require(rc == 0, "command failed: " + args);
  };
  run("demo --out \"" + (dir / "seq").string() + "\" --frames 3 --seed 9");
  const std::string config = (dir / "seq/config.json").string();
  auto pipeline = [&](const std::string& name, int threads) {
    const std::string common = " --config \"" + config + "\" --seed 11 --threads " + std::to_string(threads) +
                               " --out \"" + (dir / name).string() + "\"";
    run("reconstruct --method both" + common);
    run("simulate" + common);
    run("evaluate" + common);
  };
  pipeline("run1", 1);
  pipeline("run2", 1);
  pipeline("run4", 4);

  std::vector<fs::path> names;
  if (fs::exists(dir / "run1")) {
    for (const auto& e : fs::recursive_directory_iterator(dir / "run1")) {
      if (e.is_regular_file()) names.push_back(fs::relative(e.path(), dir / "run1"));
    }
  }
  std::sort(names.begin(), names.end());
  o.require(names.size() > 10, "only " + std::to_string(names.size()) + " output files");
  std::size_t differ = 0;
  for (const auto& n : names) {
    const std::string ref = slurp(dir / "run1" / n);
    for (const char* other : {"run2", "run4"}) {
      if (!fs::exists(dir / other / n) || slurp(dir / other / n) != ref) {
        ++differ;
        o.require(false, std::string(other) + "/" + n.string() + " differs");
      }
    }
  }
  o.note(std::to_string(names.size()) + " files compared across 2 runs and threads {1, 4}");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path to resim> [--known-fail ID]... [A1 A2 ...]\n";
    return 2;
  }
  const std::string cli = argv[1];
  // Criteria listed with --known-fail still run and print FAIL, but do not
  // fail the process. See the README for why each one is listed.
  std::set<std::string> only, known_fail;
  for (int i = 2; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--known-fail" && i + 1 < argc) known_fail.insert(argv[++i]);
    else only.insert(a);
  }
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"A1 closed-loop reconstruction", a1_closed_loop},
      {"A2 volume-fit convergence", a2_volume_fit},
      {"A3 depth rendering", a3_rendering},
      {"A4 sensor-profile fidelity", a4_profiles},
      {"A5 ray-cast oracle", a5_raycast},
      {"A6 pose replay", a6_replay},
      {"A7 metric correctness", a7_metrics},
      {"A8 monotone ranking", a8_ranking},
      {"A9 determinism", [&] { return a9_determinism(cli); }},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const std::string id = std::string(name).substr(0, 2);
    // A2 reuses the scene written by A1
    if (!only.empty() && !only.count(id) && !(id == "A1" && only.count("A2"))) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const bool known = known_fail.count(id) > 0;
    if (!o.pass && !known) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << num(seconds_since(t0)) << " s): " << o.detail
              << (known ? (o.pass ? " [listed as known failure but passed]" : " [known failure]") : "")
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}

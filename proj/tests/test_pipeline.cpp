#include "resim/errors.hpp"
#include "resim/ingest.hpp"
#include "resim/pipeline.hpp"
#include "resim/ply.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace resim;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Message of the InputError thrown by loading `json_text` as a config.
std::string config_error(const fs::path& dir, const std::string& json_text) {
  write_file(dir / "c.json", json_text);
  try {
    load_pipeline_config(dir / "c.json");
  } catch (const InputError& e) {
    return e.what();
  } catch (const NotFoundError& e) {
    return e.what();
  }
  return "";
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("method names and stage seeds") {
  CHECK(parse_recon_method("tsdf") == ReconMethod::Tsdf);
  CHECK(parse_recon_method("volume-fit") == ReconMethod::VolumeFit);
  CHECK(parse_recon_method("both") == ReconMethod::Both);
  CHECK_THROWS_AS(parse_recon_method("poisson"), InputError);
  for (auto m : {ReconMethod::Tsdf, ReconMethod::VolumeFit, ReconMethod::Both})
    CHECK(parse_recon_method(to_string(m)) == m);
  CHECK(stage_seed(1, Stage::Fit) != stage_seed(1, Stage::Simulate));
  CHECK(stage_seed(1, Stage::Fit) != stage_seed(2, Stage::Fit));
  CHECK(stage_seed(7, Stage::Compare) == stage_seed(7, Stage::Compare));
}

TEST_CASE("config errors name the offending field") {
  const auto dir = test::tmp_dir("pipeline_config");
  CHECK(config_error(dir, R"({"optimizer": {"epochz": 3}})").find("optimizer.epochz") != std::string::npos);
  CHECK(config_error(dir, R"({"optimizer": {"epochs": 0}})").find("optimizer.epochs") != std::string::npos);
  CHECK(config_error(dir, R"({"optimizer": {"epochs": "ten"}})").find("optimizer.epochs") != std::string::npos);
  CHECK(config_error(dir, R"({"grid": {"voxel_size": -1}})").find("grid.voxel_size") != std::string::npos);
  CHECK(config_error(dir, R"({"render": {"num_samples": 0}})").find("render") != std::string::npos);
  CHECK(config_error(dir, R"({"method": "poisson"})").find("poisson") != std::string::npos);
  CHECK(config_error(dir, R"({"target_profiles": ["velodyne-9000"]})").find("kitti") != std::string::npos);
  CHECK(config_error(dir, R"({"evaluate": {"sequences": [{"id": "a"}]}})").find("evaluate.sequences[0]") !=
        std::string::npos);
  CHECK(config_error(dir, R"({"grid": {"origin": [0, 0, 0]}})").find("grid") != std::string::npos);
  CHECK(config_error(dir, "{not json").find("c.json") != std::string::npos);
  CHECK_THROWS_AS(load_pipeline_config(dir / "missing.json"), InputError);
}

TEST_CASE("config values and relative paths") {
  const auto dir = test::tmp_dir("pipeline_config_ok");
  fs::create_directories(dir / "seq");
  write_file(dir / "seq/manifest.json", R"({"frames": []})");
  write_file(dir / "c.json", R"({"manifest": "seq/manifest.json", "method": "both",
    "optimizer": {"epochs": 7}, "fit": {"init": "constant", "init_value": 0.5},
    "output": "o", "seed": 42, "threads": 3, "replay": {"pose_update": "rigid"}})");
  const auto cfg = load_pipeline_config(dir / "c.json");
  CHECK(cfg.manifest == dir / "seq/manifest.json");
  CHECK(cfg.output_dir == dir / "o");
  CHECK(cfg.method == ReconMethod::Both);
  CHECK(cfg.optimizer.epochs == 7);
  CHECK_FALSE(cfg.fit.init_from_tsdf);
  CHECK(cfg.fit.init_value == 0.5);
  CHECK(cfg.seed == 42);
  CHECK(cfg.threads == 3);
  CHECK(cfg.replay.pose_update == PoseUpdate::Rigid);
}

TEST_CASE("label readers accept both layouts") {
  const auto dir = test::tmp_dir("pipeline_labels");
  BoxLabel b;
  b.class_name = ObjectClass::Cyclist;
  b.center = {1, 2, 3};
  b.size = {1.8, 0.6, 1.7};
  b.yaw = 0.3;
  write_labels(std::span<const BoxLabel>(&b, 1), dir / "ingest.txt");
  const auto a = read_any_labels(dir / "ingest.txt");
  REQUIRE(a.size() == 1);
  CHECK(a[0].size.isApprox(b.size));

  write_file(dir / "exported.txt", "Vehicle 4 2 1.6 1 2 0 0.1\n");
  const auto e = read_any_labels(dir / "exported.txt");
  REQUIRE(e.size() == 1);
  CHECK(e[0].class_name == ObjectClass::Vehicle);
  CHECK(e[0].center.isApprox(Vec3(1, 2, 0.8)));

  write_file(dir / "broken.txt", "Vehicle 1 2 3\n");
  try {
    read_any_labels(dir / "broken.txt");
    FAIL("no error");
  } catch (const InputError& err) {
    CHECK(std::string(err.what()).find("broken.txt:1") != std::string::npos);
  }

  const auto s = cmd_stats({dir / "ingest.txt", dir / "exported.txt"}, 0.25, dir / "out");
  REQUIRE(s.divergence.size() == 2);
  CHECK(s.divergence[0][0] == 0.0);
  CHECK(s.divergence[0][1] == 1.0);
  CHECK(fs::exists(dir / "out/stats/divergence.csv"));
  CHECK_THROWS_AS(cmd_stats({}, 0.25, dir / "out"), InputError);
}

TEST_CASE("score_scan_pair") {
  PointCloud a;
  for (int i = 0; i < 20; ++i) {
    a.points.push_back(Vec3(10.0 + i, 0, 0));
    a.beam_id.push_back(i % 4);
    a.azimuth_step.push_back(i);
  }
  const auto same = score_scan_pair(a, a, 0.97, 1);
  CHECK(same.rmse == 0.0);
  CHECK(same.cd == 0.0);
  CHECK(same.matched_rays == 20);

  // stretch every return by 0.5 m along its own ray
  PointCloud b = a;
  for (auto& p : b.points) p *= (p.norm() + 0.5) / p.norm();
  const auto off = score_scan_pair(a, b, 1.0, 1);
  CHECK(off.rmse == doctest::Approx(0.5));
  CHECK(off.matched_rays == 20);
}

TEST_CASE("demo sequence runs through reconstruct, simulate and evaluate deterministically") {
  const auto dir = test::tmp_dir("pipeline_demo");
  DemoOptions opt;
  opt.frames = 2;
  write_demo_sequence(dir / "seq", opt);
  REQUIRE(fs::exists(dir / "seq/config.json"));

  auto run = [&](const std::string& name, int threads) {
    auto cfg = load_pipeline_config(dir / "seq/config.json");
    cfg.output_dir = dir / name;
    cfg.threads = threads;
    cfg.method = ReconMethod::Both;
    cfg.optimizer.epochs = 5;
    const auto rec = cmd_reconstruct(cfg);
    CHECK(rec.fit.has_value());
    CHECK(rec.comparison.has_value());
    CHECK(rec.consolidated_points > 10000);
    const auto sim = cmd_simulate(cfg);
    CHECK(sim.frames.size() == 4);  // two frames for each of two profiles
    for (const auto& f : sim.frames) {
      CHECK(f.points > 1000);
      CHECK(f.objects == 1);
    }
    const auto ev = cmd_evaluate(cfg);
    CHECK(ev.ranking.size() == 2);
    for (const auto& s : ev.scores) {
      if (s.sequence_id == "tsdf") CHECK(s.cd < 0.05);
    }
    return cfg.output_dir;
  };
  const auto a = run("a", 1);
  const auto b = run("b", 1);
  const auto c = run("c", 4);
  const auto names = files_under(a);
  CHECK(names == files_under(b));
  CHECK(names == files_under(c));
  for (const auto& n : names) {
    INFO(n.string());
    const std::string bytes = slurp(a / n);
    CHECK(bytes == slurp(b / n));
    CHECK(bytes == slurp(c / n));
  }
  CHECK(fs::exists(a / "reconstruct/tsdf_mesh.ply"));
  CHECK(fs::exists(a / "reconstruct/volume_fit_mesh.ply"));
  CHECK(fs::exists(a / "simulate/kitti/frame_000000.ply"));
  CHECK(fs::exists(a / "simulate/summary.csv"));
  CHECK(fs::exists(a / "evaluate/ranking.csv"));
}

TEST_CASE("invalid input writes no output") {
  const auto dir = test::tmp_dir("pipeline_invalid");
  write_file(dir / "m.json", R"({"frames": []})");
  PipelineConfig cfg;
  cfg.manifest = dir / "m.json";
  cfg.output_dir = dir / "out";
  CHECK_THROWS_AS(cmd_reconstruct(cfg), InputError);
  CHECK_THROWS_AS(cmd_evaluate(cfg), InputError);
  cfg.simulate_mesh = dir / "nothing.ply";
  CHECK_THROWS(cmd_simulate(cfg));
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK_THROWS_AS(write_demo_sequence(dir / "d", DemoOptions{0, 0}), InputError);
}

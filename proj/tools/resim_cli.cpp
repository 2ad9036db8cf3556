// Command-line front end: reconstruct, simulate, evaluate, stats, presets
// and demo (synthetic input data).
#include "resim/errors.hpp"
#include "resim/parallel.hpp"
#include "resim/pipeline.hpp"
#include "resim/ply.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kInput = 2, kNumerical = 3 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "pipeline config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "root seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
  cmd->add_option("--threads", c.threads, "worker threads (default: RESIM_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
}

resim::PipelineConfig load(const Common& c) {
  resim::PipelineConfig cfg;
  if (!c.config.empty()) {
    cfg = resim::load_pipeline_config(c.config);
  } else {
    cfg.threads = resim::default_thread_count();
  }
  if (c.seed) cfg.seed = *c.seed;
  if (c.out) cfg.output_dir = *c.out;
  if (c.threads) cfg.threads = *c.threads;
  return cfg;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void print_files(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR reconstruct / resimulate toolkit"};
  app.require_subcommand(1);

  Common rc;
  std::string method;
  auto* reconstruct = app.add_subcommand("reconstruct", "build SDF grids and meshes from a sequence");
  add_common(reconstruct, rc, true);
  reconstruct->add_option("--method", method, "tsdf, volume-fit or both")
      ->check(CLI::IsMember({"tsdf", "volume-fit", "both"}));

  Common sc;
  std::string mesh;
  std::vector<std::string> profiles;
  auto* simulate = app.add_subcommand("simulate", "raycast a mesh with replayed traffic");
  add_common(simulate, sc, true);
  simulate->add_option("--mesh", mesh, "background mesh PLY");
  simulate->add_option("--profile", profiles, "sensor preset name or profile file (repeatable)");

  Common ec;
  std::string eval_profile;
  bool verbose = false;
  auto* evaluate = app.add_subcommand("evaluate", "score scans against reconstructions");
  add_common(evaluate, ec, true);
  evaluate->add_option("--profile", eval_profile, "source sensor used for re-raycasting");
  evaluate->add_flag("--verbose", verbose, "also print RMSE without the inner square");

  Common stc;
  std::vector<std::string> label_files;
  std::optional<double> bin_width;
  auto* stats = app.add_subcommand("stats", "object-size histograms and divergences");
  add_common(stats, stc, false);
  stats->add_option("labels", label_files, "label files")->required();
  stats->add_option("--bin-width", bin_width, "histogram bin width in meters");

  auto* presets = app.add_subcommand("presets", "print the sensor preset table");

  resim::DemoOptions demo_opt;
  std::string demo_out;
  auto* demo = app.add_subcommand("demo", "write a synthetic input sequence");
  demo->add_option("--out", demo_out, "directory to create")->required();
  demo->add_option("--seed", demo_opt.seed, "scan seed");
  demo->add_option("--frames", demo_opt.frames, "number of frames");
  demo->add_option("--profile", demo_opt.profile, "sensor for the synthetic scans");
  demo->add_option("--noise", demo_opt.range_noise, "range noise sigma in meters");
  demo->add_flag("!--static", demo_opt.moving_vehicle, "leave out the moving vehicle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*reconstruct) {
      auto cfg = load(rc);
      if (!method.empty()) cfg.method = resim::parse_recon_method(method);
      const auto out = resim::cmd_reconstruct(cfg);
      std::cout << "consolidated points: " << out.consolidated_points
                << " (outliers removed: " << out.removed_outliers << ")\n";
      if (out.fit) {
        std::cout << "volume fit: " << out.rays << " rays, loss " << num(out.fit->initial_loss)
                  << " -> " << num(out.fit->final_loss) << ", sigmoid scale "
                  << num(out.fit->sigmoid_scale) << "\n";
      }
      if (out.comparison) {
        std::cout << "tsdf vs volume-fit: truncated CD " << num(out.comparison->total) << "\n";
      }
      print_files(out.files);
    } else if (*simulate) {
      const auto cfg = load(sc);
      std::optional<std::filesystem::path> m;
      if (!mesh.empty()) m = mesh;
      const auto out = resim::cmd_simulate(cfg, m, profiles);
      std::cout << "profile,frame,points,dropped,missed,objects\n";
      for (const auto& f : out.frames) {
        std::cout << f.profile << "," << f.frame << "," << f.points << "," << f.dropped << ","
                  << f.missed << "," << f.objects << "\n";
      }
      print_files(out.files);
    } else if (*evaluate) {
      auto cfg = load(ec);
      if (!eval_profile.empty()) cfg.source_profile = eval_profile;
      const auto out = resim::cmd_evaluate(cfg);
      std::cout << "sequence_id,frame,rmse,cd,matched_rays" << (verbose ? ",unsquared_rmse" : "")
                << "\n";
      for (const auto& s : out.scores) {
        std::cout << s.sequence_id << "," << s.frame << "," << num(s.rmse) << "," << num(s.cd)
                  << "," << s.matched_rays;
        if (verbose) std::cout << "," << num(s.unsquared_rmse);
        std::cout << "\n";
      }
      std::cout << "ranking:";
      for (const auto& r : out.ranking) std::cout << " " << r.sequence_id;
      std::cout << "\n";
      print_files(out.files);
    } else if (*stats) {
      const auto cfg = load(stc);
      std::vector<std::filesystem::path> files(label_files.begin(), label_files.end());
      const auto out =
          resim::cmd_stats(files, bin_width.value_or(cfg.stats_bin_width), cfg.output_dir);
      for (std::size_t i = 0; i < files.size(); ++i) {
        std::cout << files[i].filename().string();
        for (double d : out.divergence[i]) std::cout << "," << num(d);
        std::cout << "\n";
      }
      print_files(out.files);
    } else if (*presets) {
      std::cout << resim::presets_table();
    } else if (*demo) {
      resim::write_demo_sequence(demo_out, demo_opt);
      std::cout << "wrote demo sequence to " << demo_out << "\n";
    }
  } catch (const resim::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const resim::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const resim::NotFoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const resim::PlyParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const resim::PlyUnsupportedError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kOk;
}

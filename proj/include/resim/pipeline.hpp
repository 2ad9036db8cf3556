// Config-driven reconstruct -> simulate -> evaluate pipeline used by the
// command-line tool and the Python module.
//
// Every command validates its whole configuration before it creates any
// output file. Errors: InputError / NotFoundError / std::invalid_argument
// for bad input, NumericalError when fitting breaks down.
#pragma once

#include "resim/geometry.hpp"
#include "resim/lidar_sim.hpp"
#include "resim/metrics.hpp"
#include "resim/scene_replay.hpp"
#include "resim/sdf_fit.hpp"
#include "resim/tsdf.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace resim {

enum class ReconMethod { Tsdf, VolumeFit, Both };

std::string_view to_string(ReconMethod m);
/// "tsdf", "volume-fit" or "both"; throws InputError otherwise.
ReconMethod parse_recon_method(std::string_view s);

struct GridConfig {
  double voxel_size = 0.1;
  double padding = 2.0;  // used when origin/dims are not given
  std::optional<Vec3> origin;
  std::optional<std::array<int, 3>> dims;
};

struct FitSetup {
  double voxel_size = 0.25;
  std::size_t max_rays = 20000;
  bool init_from_tsdf = true;  // else a constant grid
  double init_value = 1.0;
};

struct ReplayConfig {
  std::optional<std::filesystem::path> ego_track;
  std::optional<std::filesystem::path> tracks;
  std::optional<std::filesystem::path> assets;
  std::optional<std::filesystem::path> size_map;
  PoseUpdate pose_update = PoseUpdate::Componentwise;
};

struct EvalSequence {
  std::string id;
  /// Either a manifest (clouds to compare against re-raycast `mesh`) ...
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> mesh;
  /// ... or two directories of scans paired by sorted file name.
  std::optional<std::filesystem::path> real_dir;
  std::optional<std::filesystem::path> simulated_dir;
};

struct PipelineConfig {
  std::filesystem::path manifest;
  GridConfig grid;
  ReconMethod method = ReconMethod::Tsdf;
  TsdfConfig tsdf;
  RenderConfig render;
  OptimizerConfig optimizer;
  FitSetup fit;
  std::size_t outlier_neighbors = kDefaultOutlierNeighbors;
  double outlier_sigma = kDefaultOutlierSigma;
  double side_weight = kDefaultSideWeight;
  std::string source_profile = "waymo-top";
  std::vector<std::string> target_profiles{"kitti"};
  ReplayConfig replay;
  std::optional<std::filesystem::path> simulate_mesh;
  std::vector<EvalSequence> eval_sequences;
  double truncation = 0.97;
  double stats_bin_width = 0.25;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Reads a JSON config. Relative paths resolve against the config's
/// directory. Unknown keys and bad values raise InputError naming the field
/// path (e.g. "optimizer.epochs").
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Checks values and that referenced files exist. Throws InputError.
void validate_config(const PipelineConfig& cfg);

/// Seeds for the pipeline stages, derived from the root seed.
enum class Stage : std::uint64_t { RaySubset = 1, Fit = 2, Simulate = 3, Compare = 4 };
std::uint64_t stage_seed(std::uint64_t root, Stage stage);

struct ReconstructOutput {
  std::vector<std::filesystem::path> files;
  std::optional<FitResult> fit;
  std::optional<CdResult> comparison;  // method == Both
  std::size_t consolidated_points = 0;
  std::size_t removed_outliers = 0;
  std::size_t rays = 0;
};

/// Ingest then TSDF fusion and/or volume fitting. Writes under
/// <output_dir>/reconstruct: tsdf.sdf, tsdf_mesh.ply, volume_fit.sdf,
/// volume_fit_mesh.ply, loss_trace.csv and (for both) comparison.csv.
/// Geometry is in the sensor frame of the first manifest frame.
ReconstructOutput cmd_reconstruct(const PipelineConfig& cfg);

struct SimulatedFrameSummary {
  std::string profile;
  int frame = 0;
  std::size_t points = 0;
  std::size_t dropped = 0;
  std::size_t missed = 0;
  std::size_t objects = 0;
};

struct SimulateOutput {
  std::vector<std::filesystem::path> files;
  std::vector<SimulatedFrameSummary> frames;
};

/// Mesh to use: `mesh` if given, else cfg.simulate_mesh, else the TSDF (or
/// volume-fit) mesh from a previous reconstruct run. `profiles` overrides
/// cfg.target_profiles when non-empty. Writes
/// <output_dir>/simulate/<profile>/frame_NNNNNN.ply, labels_NNNNNN.txt and
/// <output_dir>/simulate/summary.csv.
SimulateOutput cmd_simulate(const PipelineConfig& cfg,
                            const std::optional<std::filesystem::path>& mesh = std::nullopt,
                            const std::vector<std::string>& profiles = {});

struct FrameScore {
  std::string sequence_id;
  std::string frame;  // frame label, or "all" for the aggregate row
  double rmse = 0.0;  // NaN without matched rays
  double unsquared_rmse = 0.0;
  double cd = 0.0;
  std::size_t matched_rays = 0;
};

struct EvaluateOutput {
  std::vector<std::filesystem::path> files;
  std::vector<FrameScore> scores;
  std::vector<SequenceScore> ranking;
};

/// Scores the configured sequences (or, with none configured, the
/// reconstructed meshes against the manifest). Writes
/// <output_dir>/evaluate/scores.csv and ranking.csv.
EvaluateOutput cmd_evaluate(const PipelineConfig& cfg);

/// Pairs two scans: CD over all points, RMSE over the returns whose
/// (beam_id, azimuth_step) appear in both.
FrameScore score_scan_pair(const PointCloud& real, const PointCloud& simulated, double truncation,
                           int threads);

struct StatsOutput {
  std::vector<std::filesystem::path> files;
  std::vector<SizeHistogram> histograms;
  std::vector<std::vector<double>> divergence;
};

/// Label files in either the ingest format (9 fields) or the exported
/// format (8 fields). Writes <output_dir>/stats/hist_<stem>.csv and
/// divergence.csv.
StatsOutput cmd_stats(const std::vector<std::filesystem::path>& label_files, double bin_width,
                      const std::filesystem::path& output_dir);

/// Reads either label format into BoxLabels (exported boxes get their
/// geometric center).
std::vector<BoxLabel> read_any_labels(const std::filesystem::path& path);

/// CSV table of the sensor presets.
std::string presets_table();

struct DemoOptions {
  std::uint64_t seed = 0;
  int frames = 3;
  std::string profile = "waymo-top";
  double range_noise = -1.0;  // < 0 keeps the profile's noise
  bool moving_vehicle = true;
};

/// Writes a synthetic sequence (scans, manifest, labels, ego and object
/// tracks, config.json) of the demo scene into `dir`.
void write_demo_sequence(const std::filesystem::path& dir, const DemoOptions& options);

}  // namespace resim

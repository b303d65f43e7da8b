#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcsflow/flow.hpp"
#include "dcsflow/pod.hpp"
#include "dcsflow/reconstruct.hpp"
#include "dcsflow/sparse.hpp"
#include "dcsflow/trajopt.hpp"

namespace dcsflow {

/// Full pipeline configuration, loaded from a single JSON document.
/// Unknown keys are rejected; every field is re-validated against its owning
/// module's invariants on load.
struct PipelineConfig {
  int schema_version = 1;

  DoubleGyreParams flow;
  GridSpec grid;
  TimeGrid times;

  PodFlavor pod_flavor = PodFlavor::svd;
  PodTruncation pod_truncation;

  int waypoint_count = 5;        // m
  int waypoint_trials = 20;      // c1
  SelectionOptions selection;

  Vec2 start{0.25, 0.25};        // g1
  Vec2 goal{1.75, 0.75};         // g2
  CostWeights weights;
  double speed_max = 0.7;
  int steps_per_segment = 10;    // q
  int shuffle_trials = 7;        // c2
  ReconstructionPolicy recon_policy;
  OptimizeOptions optimizer;

  // sweep harness
  std::vector<int> sweep_sizes;  // waypoint sizes to evaluate
  int sweep_sets = 10;
  int sweep_shuffles = 7;

  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "out";
  int threads = 1;

  void validate() const;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  /// FNV-1a hash of the canonical JSON dump, hex-encoded.
  std::string hash() const;
};

struct StageArtifacts {
  std::vector<std::filesystem::path> files;
};

/// Per-trajectory record of a sweep cell.
struct SweepRecord {
  int size = 0;
  int set_index = 0;
  int shuffle_index = 0;
  double recon_error = 0.0;  // E
  double energy = 0.0;       // F
  double duration = 0.0;     // D
  bool converged = false;
  bool failed = false;
};

struct SweepSizeSummary {
  int size = 0;
  int trials = 0;    // successful records aggregated
  int failures = 0;
  double mean_recon = 0.0, sigma_recon = 0.0;
  double mean_energy = 0.0, sigma_energy = 0.0;
  double mean_duration = 0.0, sigma_duration = 0.0;
};

struct SweepReport {
  std::vector<SweepRecord> records;
  std::vector<SweepSizeSummary> summaries;
};

/// Executes generate -> pod -> select -> plan -> evaluate, writing every
/// stage artifact plus a manifest with the config hash, derived seeds, and a
/// content hash per file. Fully deterministic given the config.
StageArtifacts run_pipeline(const PipelineConfig& config);

/// Individual stages (the CLI subcommands). Each writes its artifacts under
/// config.output_dir and returns the file list.
StageArtifacts run_generate(const PipelineConfig& config);
StageArtifacts run_pod(const PipelineConfig& config);
StageArtifacts run_select(const PipelineConfig& config);
StageArtifacts run_plan(const PipelineConfig& config);
StageArtifacts run_evaluate(const PipelineConfig& config);

/// Fig.-5-style harness: for every size, `sets_per_size` independent
/// selections, each shuffled `shuffles_per_set` times and optimized.
/// Individual failures are recorded and excluded from the aggregates; a size
/// with zero successes fails the sweep.
SweepReport sweep(const PipelineConfig& config, const std::vector<int>& sizes,
                  int sets_per_size, int shuffles_per_set);

StageArtifacts run_sweep(const PipelineConfig& config);

enum class PlotKind { field_map, error_map, trajectory_overlay, sweep_bars };
PlotKind parse_plot_kind(const std::string& name);

/// Reformats stage artifacts into plot-ready CSV files.
StageArtifacts export_plot_data(const PipelineConfig& config, PlotKind kind);

}  // namespace dcsflow

#pragma once

#include "kpref/io.hpp"

namespace kpref {

struct FilterOptions {
  FilterMode mode = FilterMode::Similarity;
  double threshold = 0.0;  // 0 disables filtering at load time
};

struct SynthOptions {
  int num_views = 6;
  int image_size = 448;
  int num_keypoints = 80;
  double magnitude = 1.0;
  PerturbKind perturb_kind = PerturbKind::Uniform;
  double perturb = 3.0;
  double flow_noise_sigma = 0.0;
};

struct PipelineConfig {
  std::string keypoints_path;
  std::string matches_path;
  std::string images_dir;
  std::string flows_path;
  std::string scene_dir;   // synth output / eval input
  std::string out_dir;

  SolverOptions solver;
  AlignOptions align;
  FilterOptions filter;
  SynthOptions synth;
  std::vector<double> eval_thresholds;  // default 0.2, 0.4, ..., 10.0
  int threads = 1;
  std::uint64_t seed = 0;

  PipelineConfig();
};

/// Reads a JSON config file; unknown keys raise DataError.
PipelineConfig load_config(const std::filesystem::path& path);

SolveMode parse_mode(const std::string& name);
std::string mode_name(SolveMode mode);

/// Results carried between stages and into the report.
struct RefineResult {
  TrackAssignment assignment;
  ComponentFamily family;
  std::vector<SolveReport> reports;  // per component
  double initial_objective = 0.0;
  double final_objective = 0.0;
  int total_iterations = 0;
  int moved_nodes = 0;
  double max_moved = 0.0;
};

/// Component family appropriate for the solve mode: recursive graph cut for
/// Full, meta connected components for NoPartition/IntraInter, one set per
/// track for IntraOnly.
ComponentFamily make_component_family(const MatchGraph& graph,
                                      const TrackAssignment& assignment,
                                      const MetaGraph& meta,
                                      SolveMode mode);

/// Solves every component (in parallel when threads > 1) and applies the
/// refined offsets to graph.nodes[...].position. Deterministic for any
/// thread count.
RefineResult refine_graph(MatchGraph& graph, const SolverOptions& options,
                          int threads);

// Stage drivers used by the CLI. Each reads the inputs named in the config,
// writes its artifacts under out_dir, and raises DataError on missing or
// malformed inputs.
void run_align(const PipelineConfig& config);
void run_partition(const PipelineConfig& config);
void run_refine(const PipelineConfig& config);
void run_refine_query(const PipelineConfig& config);
void run_synth(const PipelineConfig& config);
void run_eval(const PipelineConfig& config);
void run_pipeline(const PipelineConfig& config);  // align -> partition -> refine

}  // namespace kpref

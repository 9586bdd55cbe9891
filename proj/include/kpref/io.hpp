#pragma once

#include "kpref/align.hpp"
#include "kpref/optimize.hpp"
#include "kpref/synth.hpp"

#include <filesystem>
#include <map>

namespace kpref {

// All artifacts are UTF-8 CSV with a mandatory header row and '.' decimal
// separator. Floats are written with 17 significant digits so a write/read
// cycle is value-exact. Schema violations raise DataError with the line
// number and the offending column.

/// Keypoints file (`image_id,kp_id,x,y`). Returns per-image keypoint lists;
/// image ids and per-image keypoint ids must be dense and zero-based.
std::vector<std::vector<Vec2>> read_keypoints_csv(
    const std::filesystem::path& path);
void write_keypoints_csv(const std::filesystem::path& path,
                         const std::vector<std::vector<Vec2>>& keypoints);

/// Matches file (`image_a,kp_a,image_b,kp_b,similarity`), one row per
/// undirected match. When per-image keypoint counts are given, rows that
/// reference unknown images or keypoints fail with their line number.
std::vector<PairMatches> read_matches_csv(
    const std::filesystem::path& path,
    const std::vector<int>* keypoint_counts = nullptr);
void write_matches_csv(const std::filesystem::path& path,
                       const std::vector<PairMatches>& matches);

/// Flow file: one row per directed edge,
/// `image_u,kp_u,image_v,kp_v,spacing,dx_-1-1,dy_-1-1,...,dx_11,dy_11`
/// with the 3x3 grid serialized row-major (g_y outer, g_x inner).
struct FlowRecord {
  int image_u = -1, kp_u = -1, image_v = -1, kp_v = -1;
  FlowField field;
};
std::vector<FlowRecord> read_flows_csv(const std::filesystem::path& path);
void write_flows_csv(const std::filesystem::path& path,
                     const MatchGraph& graph);

/// Attaches flow records to the matching directed edges. Rows referencing
/// unknown keypoints or non-existent edges raise DataError.
void attach_flows(MatchGraph& graph, const std::vector<FlowRecord>& records);

/// Track file (`node_id,track_id,component_id,is_root`).
void write_tracks_csv(const std::filesystem::path& path,
                      const TrackAssignment& assignment,
                      const ComponentFamily& family);

/// Refined keypoints file
/// (`image_id,kp_id,x0,y0,x,y,track_id,component_id`).
void write_refined_csv(const std::filesystem::path& path,
                       const MatchGraph& graph,
                       const TrackAssignment& assignment,
                       const ComponentFamily& family);

/// Query hypotheses file (`kp_id,hypothesis_id,similarity,dx,dy`).
std::map<int, std::vector<QueryHypothesis>> read_query_hypotheses_csv(
    const std::filesystem::path& path);
/// Refined query correspondences (`kp_id,hypothesis_id,x,y`).
void write_refined_queries_csv(
    const std::filesystem::path& path,
    const std::vector<std::tuple<int, int, Vec2>>& rows);

/// Binary 8-bit PGM (P5), intensities quantized from [0, 1].
void write_pgm(const std::filesystem::path& path, const ImageRef& image);
ImageRef read_pgm(const std::filesystem::path& path, int image_id);

/// Scene dump: images/<id>.pgm, homographies.csv (9 floats row-major per
/// view), keypoints_true.csv, keypoints_perturbed.csv.
void write_scene(const std::filesystem::path& dir, const SyntheticScene& scene,
                 const std::vector<std::vector<Vec2>>& perturbed);
std::vector<Mat3> read_homographies_csv(const std::filesystem::path& path);
void write_homographies_csv(const std::filesystem::path& path,
                            const std::vector<Mat3>& views);

/// Loads images/<id>.pgm for ids 0..count-1 from a directory.
std::vector<ImageRef> read_images_dir(const std::filesystem::path& dir,
                                      int count);

}  // namespace kpref

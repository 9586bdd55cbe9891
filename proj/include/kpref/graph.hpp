#pragma once

#include "kpref/common.hpp"
#include "kpref/flow.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace kpref {

/// Grayscale image. Pixel data is row-major with values in [0, 1] and may be
/// absent when the pipeline runs on precomputed flows.
struct ImageRef {
  int image_id = -1;
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  bool has_pixels() const { return !pixels.empty(); }
  double at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * width + x];
  }
};

struct Keypoint {
  int node_id = -1;
  int image_id = -1;
  int index_in_image = -1;               // keypoint id within its image
  Vec2 position = Vec2::Zero();          // current location
  Vec2 initial_position = Vec2::Zero();  // location at graph creation
};

/// Directed match edge. Reverse edges are always stored, each with its own
/// flow field.
struct MatchEdge {
  int from_node = -1;
  int to_node = -1;
  double similarity = 0.0;  // descriptor cosine similarity, in (0, 1]
  std::optional<FlowField> flow;
};

/// Tentative matches graph: keypoints as nodes, matches as weighted directed
/// edges. Immutable after construction except for flow annotation; safe to
/// share read-only across threads.
struct MatchGraph {
  std::vector<ImageRef> images;            // indexed by image id (dense)
  std::vector<Keypoint> nodes;             // indexed by node id (dense)
  std::vector<MatchEdge> edges;            // directed; u->v and v->u adjacent
  std::vector<std::vector<int>> incident;  // node -> ids of edges touching it
  std::vector<int> first_node;             // image id -> first node id

  // The two directions of a match are stored at ids 2k and 2k+1.
  int reverse_edge(int edge_id) const { return edge_id ^ 1; }
  // Node id for (image, keypoint index); throws DataError if out of range.
  int node_of(int image_id, int kp_index) const;
};

/// Matches between one image pair, given as (index in a, index in b,
/// similarity) triples.
struct PairMatches {
  int image_a = -1;
  int image_b = -1;
  std::vector<std::tuple<int, int, double>> matches;
};

/// Builds the tentative matches graph. Keypoints are listed per image (the
/// outer index is the image id); node ids are assigned densely in input
/// order and never reused. Each match produces both directed edges.
/// Throws DataError for out-of-range keypoint indices or duplicate matches.
MatchGraph build_graph(std::vector<ImageRef> images,
                       const std::vector<std::vector<Vec2>>& keypoints,
                       const std::vector<PairMatches>& matches);

/// One tentative correspondence with the nearest-neighbor statistics needed
/// by the ratio test. Distances are L2 in descriptor space; a missing second
/// neighbor is represented as +inf.
struct MatchCandidate {
  int index_a = -1;
  int index_b = -1;
  double similarity = 0.0;
  double dist_a1 = 0.0, dist_a2 = std::numeric_limits<double>::infinity();
  double dist_b1 = 0.0, dist_b2 = std::numeric_limits<double>::infinity();
};

/// Mutual nearest neighbors between two L2-normalized descriptor sets
/// (one descriptor per row). Similarity is the cosine (dot product).
std::vector<MatchCandidate> mutual_match(const Eigen::MatrixXd& desc_a,
                                         const Eigen::MatrixXd& desc_b);

enum class FilterMode { Ratio, Similarity };

/// Ratio mode keeps candidates whose first-to-second neighbor distance ratio
/// is below the threshold in both directions; similarity mode keeps
/// candidates with cosine similarity >= threshold. A candidate without a
/// second neighbor passes the ratio test.
std::vector<MatchCandidate> filter_matches(
    const std::vector<MatchCandidate>& candidates, FilterMode mode,
    double threshold);

/// Similarity-weighted degree of a node's intra-track edges:
/// sum of s(u->v) over outgoing edges with track_of[u] == track_of[v].
double connectivity_score(const MatchGraph& graph,
                          const std::vector<int>& track_of, int node_id);

/// Floor applied to similarities before use as optimization weights.
inline constexpr double kSimilarityFloor = 1e-6;

}  // namespace kpref

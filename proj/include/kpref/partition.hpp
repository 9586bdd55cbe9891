#pragma once

#include "kpref/graph.hpp"

namespace kpref {

/// Partition of the graph nodes into tracks. A track holds at most one node
/// per image. Track ids are dense and ordered by each track's smallest node
/// id, so the assignment is independent of edge input order.
struct TrackAssignment {
  std::vector<int> track_of;                 // node id -> track id
  std::vector<std::vector<int>> track_nodes; // track -> sorted node ids
  std::vector<std::vector<int>> image_set;   // track -> sorted image ids
  std::vector<int> root_of;                  // track -> root node id (-1 until selected)

  int num_tracks() const { return static_cast<int>(track_nodes.size()); }
};

/// Greedy track separation. Undirected match pairs are processed in strictly
/// decreasing similarity order (pair similarity = max of the two directions,
/// ties broken by ascending (min node id, max node id)); two tracks merge iff
/// their image sets are disjoint.
TrackAssignment separate_tracks(const MatchGraph& graph);

/// Meta-graph of tracks. An undirected meta-edge aggregates the similarities
/// of every directed edge crossing the two tracks.
struct MetaGraph {
  struct Edge {
    int track_a = -1, track_b = -1;  // track_a < track_b
    double weight = 0.0;
  };
  int num_tracks = 0;
  std::vector<Edge> edges;
  std::vector<std::vector<std::pair<int, double>>> adjacency;  // track -> (nbr, w)
};

MetaGraph build_meta_graph(const MatchGraph& graph,
                           const TrackAssignment& assignment);

/// Disjoint sets of tracks produced by the recursive graph cut, with the
/// G-cardinality (underlying node count) of each set cached.
struct ComponentFamily {
  std::vector<std::vector<int>> sets;  // sorted track ids
  std::vector<int> g_cardinality;
  std::vector<int> component_of_track;  // track -> set index
};

struct Bipartition {
  std::vector<int> side_a;
  std::vector<int> side_b;
  double ncut = 0.0;  // achieved Ncut value (0 for disconnected splits)
};

/// Two-way split of a meta-graph component that approximately minimizes the
/// normalized cut. Disconnected components are split along the disconnection;
/// small components (<= 16 meta-nodes) are solved exactly; larger ones use
/// Shi-Malik spectral bisection with a full sweep along the Fiedler vector.
Bipartition normalized_cut_bisect(const MetaGraph& meta,
                                  const std::vector<int>& component);

/// Spectral sweep and exhaustive paths, exposed for direct testing.
Bipartition spectral_sweep_bisect(const MetaGraph& meta,
                                  const std::vector<int>& component);
Bipartition exhaustive_ncut_bisect(const MetaGraph& meta,
                                   const std::vector<int>& component);

/// Recursively bisects every connected meta-component until each remaining
/// set of tracks spans at most max_nodes underlying graph nodes.
ComponentFamily recursive_graph_cut(const MetaGraph& meta,
                                    const std::vector<int>& track_size,
                                    int max_nodes);

/// Edge ids split into intra-track and inter-track sets, restricted to one
/// component; edges crossing the component boundary are dropped.
struct EdgeClassification {
  std::vector<int> intra;
  std::vector<int> inter;
};

EdgeClassification classify_edges(const MatchGraph& graph,
                                  const TrackAssignment& assignment,
                                  const std::vector<int>& component_tracks);

}  // namespace kpref

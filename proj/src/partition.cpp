#include "kpref/partition.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>

namespace kpref {

namespace {

// Union-find over nodes; each root carries the sorted image set of its track.
struct TrackForest {
  std::vector<int> parent;
  std::vector<int> rank;
  std::vector<std::vector<int>> images;  // valid at roots only

  explicit TrackForest(const MatchGraph& g) {
    const int n = static_cast<int>(g.nodes.size());
    parent.resize(n);
    rank.assign(n, 0);
    images.resize(n);
    for (int i = 0; i < n; ++i) {
      parent[i] = i;
      images[i] = {g.nodes[i].image_id};
    }
  }

  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  static bool disjoint(const std::vector<int>& a, const std::vector<int>& b) {
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] == b[j]) return false;
      if (a[i] < b[j])
        ++i;
      else
        ++j;
    }
    return true;
  }

  // Merges the tracks of u and v iff their image sets are disjoint.
  void try_merge(int u, int v) {
    int ru = find(u), rv = find(v);
    if (ru == rv) return;
    if (!disjoint(images[ru], images[rv])) return;
    if (rank[ru] < rank[rv]) std::swap(ru, rv);
    if (rank[ru] == rank[rv]) ++rank[ru];
    std::vector<int> merged;
    merged.reserve(images[ru].size() + images[rv].size());
    std::merge(images[ru].begin(), images[ru].end(), images[rv].begin(),
               images[rv].end(), std::back_inserter(merged));
    parent[rv] = ru;
    images[ru] = std::move(merged);
    images[rv].clear();
  }
};

}  // namespace

TrackAssignment separate_tracks(const MatchGraph& graph) {
  // Undirected match pairs, similarity = max of the two directions.
  struct Pair {
    double sim;
    int u, v;  // u < v
  };
  std::vector<Pair> pairs;
  pairs.reserve(graph.edges.size() / 2);
  for (std::size_t e = 0; e < graph.edges.size(); e += 2) {
    const MatchEdge& fwd = graph.edges[e];
    const MatchEdge& bwd = graph.edges[e + 1];
    Pair p;
    p.sim = std::max(fwd.similarity, bwd.similarity);
    p.u = std::min(fwd.from_node, fwd.to_node);
    p.v = std::max(fwd.from_node, fwd.to_node);
    pairs.push_back(p);
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    if (a.u != b.u) return a.u < b.u;
    return a.v < b.v;
  });

  TrackForest forest(graph);
  for (const Pair& p : pairs) forest.try_merge(p.u, p.v);

  // Canonical track ids, ordered by each track's smallest node id.
  const int n = static_cast<int>(graph.nodes.size());
  TrackAssignment out;
  out.track_of.assign(n, -1);
  std::vector<int> id_of_root(n, -1);
  for (int u = 0; u < n; ++u) {
    const int root = forest.find(u);
    if (id_of_root[root] < 0) {
      id_of_root[root] = out.num_tracks();
      out.track_nodes.emplace_back();
      out.image_set.emplace_back();
    }
    const int track = id_of_root[root];
    out.track_of[u] = track;
    out.track_nodes[track].push_back(u);
    out.image_set[track].push_back(graph.nodes[u].image_id);
  }
  for (auto& imgs : out.image_set) std::sort(imgs.begin(), imgs.end());
  out.root_of.assign(out.num_tracks(), -1);
  return out;
}

MetaGraph build_meta_graph(const MatchGraph& graph,
                           const TrackAssignment& assignment) {
  MetaGraph meta;
  meta.num_tracks = assignment.num_tracks();
  std::map<std::pair<int, int>, double> weights;
  for (const MatchEdge& e : graph.edges) {
    const int tu = assignment.track_of[e.from_node];
    const int tv = assignment.track_of[e.to_node];
    if (tu == tv) continue;
    weights[{std::min(tu, tv), std::max(tu, tv)}] += e.similarity;
  }
  meta.adjacency.resize(meta.num_tracks);
  for (const auto& [key, w] : weights) {
    meta.edges.push_back({key.first, key.second, w});
    meta.adjacency[key.first].emplace_back(key.second, w);
    meta.adjacency[key.second].emplace_back(key.first, w);
  }
  return meta;
}

namespace {

constexpr int kExhaustiveNcutLimit = 16;

struct LocalGraph {
  std::vector<int> nodes;             // meta ids, sorted
  std::vector<int> local_of;          // meta id -> local index (-1 outside)
  std::vector<std::vector<std::pair<int, double>>> adj;  // local indices
  std::vector<double> degree;
  double total_degree = 0.0;

  LocalGraph(const MetaGraph& meta, const std::vector<int>& component) {
    nodes = component;
    std::sort(nodes.begin(), nodes.end());
    local_of.assign(meta.num_tracks, -1);
    for (std::size_t i = 0; i < nodes.size(); ++i)
      local_of[nodes[i]] = static_cast<int>(i);
    adj.resize(nodes.size());
    degree.assign(nodes.size(), 0.0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      for (const auto& [nbr, w] : meta.adjacency[nodes[i]]) {
        const int j = local_of[nbr];
        if (j < 0) continue;  // edge leaves the component
        adj[i].emplace_back(j, w);
        degree[i] += w;
      }
    }
    total_degree = std::accumulate(degree.begin(), degree.end(), 0.0);
  }

  int size() const { return static_cast<int>(nodes.size()); }

  // Connected components by local index, deterministic order.
  std::vector<std::vector<int>> connected_components() const {
    std::vector<int> comp(size(), -1);
    std::vector<std::vector<int>> result;
    for (int s = 0; s < size(); ++s) {
      if (comp[s] >= 0) continue;
      const int id = static_cast<int>(result.size());
      std::vector<int> stack{s}, members;
      comp[s] = id;
      while (!stack.empty()) {
        const int x = stack.back();
        stack.pop_back();
        members.push_back(x);
        for (const auto& [y, w] : adj[x]) {
          (void)w;
          if (comp[y] < 0) {
            comp[y] = id;
            stack.push_back(y);
          }
        }
      }
      std::sort(members.begin(), members.end());
      result.push_back(std::move(members));
    }
    return result;
  }
};

double ncut_value(const LocalGraph& g, const std::vector<char>& in_a) {
  double cut = 0.0, assoc_a = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    if (in_a[i]) assoc_a += g.degree[i];
    for (const auto& [j, w] : g.adj[i]) {
      if (i < j && in_a[i] != in_a[j]) cut += w;
    }
  }
  const double assoc_b = g.total_degree - assoc_a;
  if (assoc_a <= 0.0 || assoc_b <= 0.0)
    return std::numeric_limits<double>::infinity();
  return cut / assoc_a + cut / assoc_b;
}

Bipartition make_bipartition(const LocalGraph& g, const std::vector<char>& in_a,
                             double ncut) {
  Bipartition out;
  out.ncut = ncut;
  for (int i = 0; i < g.size(); ++i)
    (in_a[i] ? out.side_a : out.side_b).push_back(g.nodes[i]);
  return out;
}

Bipartition exhaustive_bisect_local(const LocalGraph& g) {
  const int n = g.size();
  std::vector<char> in_a(n, 0), best_mask;
  double best = std::numeric_limits<double>::infinity();
  // Node 0 stays on side B so each bipartition is enumerated once.
  const std::uint32_t limit = 1u << (n - 1);
  for (std::uint32_t mask = 1; mask < limit; ++mask) {
    for (int i = 0; i < n - 1; ++i) in_a[i + 1] = (mask >> i) & 1u;
    const double v = ncut_value(g, in_a);
    if (v < best) {
      best = v;
      best_mask = in_a;
    }
  }
  return make_bipartition(g, best_mask, best);
}

// Fiedler vector of the normalized Laplacian via power iteration on
// 2I - L_sym with the trivial eigenvector deflated. Deterministic seed.
std::vector<double> fiedler_vector(const LocalGraph& g) {
  const int n = g.size();
  Eigen::VectorXd d_sqrt(n);
  for (int i = 0; i < n; ++i) d_sqrt(i) = std::sqrt(g.degree[i]);
  Eigen::VectorXd u0 = d_sqrt.normalized();

  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  v -= u0.dot(v) * u0;
  if (v.norm() < 1e-12) {
    // Regular graphs leave the all-ones seed degenerate; fall back to a ramp.
    for (int i = 0; i < n; ++i) v(i) = i - 0.5 * (n - 1);
    v -= u0.dot(v) * u0;
  }
  v.normalize();

  const int max_iter = 10 * n;
  Eigen::VectorXd next(n);
  for (int it = 0; it < max_iter; ++it) {
    // next = (2I - L_sym) v = v + D^-1/2 W D^-1/2 v
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (const auto& [j, w] : g.adj[i]) acc += w * v(j) / d_sqrt(j);
      next(i) = v(i) + acc / d_sqrt(i);
    }
    next -= u0.dot(next) * u0;
    const double norm = next.norm();
    if (norm < 1e-300) break;  // numerically annihilated; keep current v
    next /= norm;
    const double delta = (next - v).lpNorm<Eigen::Infinity>();
    v = next;
    if (delta < 1e-8) break;
  }

  std::vector<double> fiedler(n);
  for (int i = 0; i < n; ++i) fiedler[i] = v(i) / d_sqrt(i);
  return fiedler;
}

Bipartition sweep_bisect_local(const LocalGraph& g) {
  const int n = g.size();
  const std::vector<double> fiedler = fiedler_vector(g);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (fiedler[a] != fiedler[b]) return fiedler[a] < fiedler[b];
    return g.nodes[a] < g.nodes[b];
  });

  // Sweep all prefix splits along the sorted Fiedler values, updating the
  // cut weight and association incrementally.
  std::vector<char> in_a(n, 0);
  double cut = 0.0, assoc_a = 0.0;
  double best = std::numeric_limits<double>::infinity();
  int best_prefix = 1;
  for (int k = 0; k < n - 1; ++k) {
    const int x = order[k];
    double to_a = 0.0;
    for (const auto& [j, w] : g.adj[x])
      if (in_a[j]) to_a += w;
    cut += g.degree[x] - 2.0 * to_a;
    assoc_a += g.degree[x];
    in_a[x] = 1;
    const double assoc_b = g.total_degree - assoc_a;
    if (assoc_a <= 0.0 || assoc_b <= 0.0) continue;
    const double v = cut / assoc_a + cut / assoc_b;
    if (v < best) {
      best = v;
      best_prefix = k + 1;
    }
  }

  std::fill(in_a.begin(), in_a.end(), 0);
  for (int k = 0; k < best_prefix; ++k) in_a[order[k]] = 1;
  return make_bipartition(g, in_a, best);
}

}  // namespace

Bipartition exhaustive_ncut_bisect(const MetaGraph& meta,
                                   const std::vector<int>& component) {
  return exhaustive_bisect_local(LocalGraph(meta, component));
}

Bipartition spectral_sweep_bisect(const MetaGraph& meta,
                                  const std::vector<int>& component) {
  return sweep_bisect_local(LocalGraph(meta, component));
}

Bipartition normalized_cut_bisect(const MetaGraph& meta,
                                  const std::vector<int>& component) {
  if (component.size() < 2)
    throw std::invalid_argument(
        "normalized_cut_bisect: component needs at least two meta-nodes");
  const LocalGraph g(meta, component);

  // A disconnected component splits along the disconnection at zero cost.
  const auto comps = g.connected_components();
  if (comps.size() > 1) {
    Bipartition out;
    out.ncut = 0.0;
    for (const int i : comps[0]) out.side_a.push_back(g.nodes[i]);
    for (std::size_t c = 1; c < comps.size(); ++c)
      for (const int i : comps[c]) out.side_b.push_back(g.nodes[i]);
    std::sort(out.side_b.begin(), out.side_b.end());
    return out;
  }

  if (g.size() <= kExhaustiveNcutLimit) return exhaustive_bisect_local(g);
  return sweep_bisect_local(g);
}

ComponentFamily recursive_graph_cut(const MetaGraph& meta,
                                    const std::vector<int>& track_size,
                                    int max_nodes) {
  if (max_nodes < 1)
    throw std::invalid_argument("recursive_graph_cut: max_nodes < 1");
  if (static_cast<int>(track_size.size()) != meta.num_tracks)
    throw std::invalid_argument(
        "recursive_graph_cut: one size per track required");

  const auto g_cardinality = [&](const std::vector<int>& tracks) {
    long long total = 0;
    for (const int t : tracks) total += track_size[t];
    return total;
  };

  ComponentFamily family;
  const std::function<void(std::vector<int>)> recurse =
      [&](std::vector<int> tracks) {
        const long long card = g_cardinality(tracks);
        if (card <= max_nodes) {
          std::sort(tracks.begin(), tracks.end());
          family.sets.push_back(std::move(tracks));
          family.g_cardinality.push_back(static_cast<int>(card));
          return;
        }
        // A single track always satisfies |t|_G <= N (one node per image).
        assert(tracks.size() >= 2);
        Bipartition split = normalized_cut_bisect(meta, tracks);
        recurse(std::move(split.side_a));
        recurse(std::move(split.side_b));
      };

  const LocalGraph whole(meta, [&] {
    std::vector<int> all(meta.num_tracks);
    std::iota(all.begin(), all.end(), 0);
    return all;
  }());
  for (const auto& comp : whole.connected_components()) {
    std::vector<int> tracks;
    tracks.reserve(comp.size());
    for (const int i : comp) tracks.push_back(whole.nodes[i]);
    recurse(std::move(tracks));
  }

  // Deterministic family order and the track -> component index.
  std::vector<std::size_t> order(family.sets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return family.sets[a].front() < family.sets[b].front();
  });
  ComponentFamily sorted;
  sorted.component_of_track.assign(meta.num_tracks, -1);
  for (const std::size_t idx : order) {
    for (const int t : family.sets[idx])
      sorted.component_of_track[t] = static_cast<int>(sorted.sets.size());
    sorted.sets.push_back(std::move(family.sets[idx]));
    sorted.g_cardinality.push_back(family.g_cardinality[idx]);
  }
  return sorted;
}

EdgeClassification classify_edges(const MatchGraph& graph,
                                  const TrackAssignment& assignment,
                                  const std::vector<int>& component_tracks) {
  std::vector<char> in_component(assignment.num_tracks(), 0);
  for (const int t : component_tracks) in_component[t] = 1;

  EdgeClassification out;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const MatchEdge& edge = graph.edges[e];
    const int tu = assignment.track_of[edge.from_node];
    const int tv = assignment.track_of[edge.to_node];
    if (!in_component[tu] || !in_component[tv]) continue;
    if (tu == tv)
      out.intra.push_back(static_cast<int>(e));
    else
      out.inter.push_back(static_cast<int>(e));
  }
  return out;
}

}  // namespace kpref

#include "kpref/graph.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

namespace kpref {

int MatchGraph::node_of(int image_id, int kp_index) const {
  if (image_id < 0 || image_id >= static_cast<int>(images.size()))
    throw DataError(strformat("unknown image id %d", image_id));
  const int node = first_node[image_id] + kp_index;
  if (kp_index < 0 || node >= first_node[image_id + 1])
    throw DataError(
        strformat("unknown keypoint %d in image %d", kp_index, image_id));
  return node;
}

MatchGraph build_graph(std::vector<ImageRef> images,
                       const std::vector<std::vector<Vec2>>& keypoints,
                       const std::vector<PairMatches>& matches) {
  if (images.size() != keypoints.size())
    throw DataError("build_graph: one keypoint list per image required");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].image_id != static_cast<int>(i))
      throw DataError(strformat("build_graph: image %zu has id %d, ids must "
                                "be dense and in order",
                                i, images[i].image_id));
    if (images[i].width < 1 || images[i].height < 1)
      throw DataError(strformat("build_graph: image %zu has empty extent", i));
    if (images[i].has_pixels() &&
        images[i].pixels.size() != static_cast<std::size_t>(images[i].width) *
                                       images[i].height)
      throw DataError(
          strformat("build_graph: image %zu pixel buffer does not match its "
                    "extent",
                    i));
  }

  MatchGraph g;
  g.images = std::move(images);
  g.first_node.assign(keypoints.size() + 1, 0);
  std::vector<int>& first_node = g.first_node;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    first_node[i + 1] = first_node[i] + static_cast<int>(keypoints[i].size());
    for (std::size_t k = 0; k < keypoints[i].size(); ++k) {
      const Vec2& p = keypoints[i][k];
      if (!p.allFinite())
        throw DataError(strformat(
            "build_graph: keypoint %zu of image %zu is not finite", k, i));
      Keypoint kp;
      kp.node_id = first_node[i] + static_cast<int>(k);
      kp.image_id = static_cast<int>(i);
      kp.index_in_image = static_cast<int>(k);
      kp.position = p;
      kp.initial_position = p;
      g.nodes.push_back(kp);
    }
  }

  g.incident.resize(g.nodes.size());
  std::unordered_set<std::uint64_t> seen;
  for (const PairMatches& pair : matches) {
    if (pair.image_a < 0 || pair.image_a >= static_cast<int>(keypoints.size()) ||
        pair.image_b < 0 || pair.image_b >= static_cast<int>(keypoints.size()))
      throw DataError(strformat("build_graph: match pair (%d,%d) names an "
                                "unknown image",
                                pair.image_a, pair.image_b));
    if (pair.image_a == pair.image_b)
      throw DataError(strformat(
          "build_graph: match pair (%d,%d) joins an image with itself",
          pair.image_a, pair.image_b));
    for (const auto& [ka, kb, sim] : pair.matches) {
      if (ka < 0 || ka >= static_cast<int>(keypoints[pair.image_a].size()) ||
          kb < 0 || kb >= static_cast<int>(keypoints[pair.image_b].size()))
        throw DataError(strformat(
            "build_graph: match (%d:%d, %d:%d) keypoint index out of range",
            pair.image_a, ka, pair.image_b, kb));
      if (!(sim > 0.0) || sim > 1.0 || !std::isfinite(sim))
        throw DataError(strformat(
            "build_graph: match (%d:%d, %d:%d) similarity %g outside (0, 1]",
            pair.image_a, ka, pair.image_b, kb, sim));
      const int u = first_node[pair.image_a] + ka;
      const int v = first_node[pair.image_b] + kb;
      const std::uint64_t lo = static_cast<std::uint32_t>(std::min(u, v));
      const std::uint64_t hi = static_cast<std::uint32_t>(std::max(u, v));
      if (!seen.insert((hi << 32) | lo).second)
        throw DataError(strformat(
            "build_graph: duplicate match (%d:%d, %d:%d)", pair.image_a, ka,
            pair.image_b, kb));
      MatchEdge fwd{u, v, sim, std::nullopt};
      MatchEdge bwd{v, u, sim, std::nullopt};
      const int id = static_cast<int>(g.edges.size());
      g.edges.push_back(fwd);
      g.edges.push_back(bwd);
      g.incident[u].push_back(id);
      g.incident[u].push_back(id + 1);
      g.incident[v].push_back(id);
      g.incident[v].push_back(id + 1);
    }
  }
  return g;
}

std::vector<MatchCandidate> mutual_match(const Eigen::MatrixXd& desc_a,
                                         const Eigen::MatrixXd& desc_b) {
  if (desc_a.rows() == 0 || desc_b.rows() == 0) return {};
  if (desc_a.cols() != desc_b.cols())
    throw DataError(strformat("mutual_match: descriptor dimensions differ "
                              "(%ld vs %ld)",
                              static_cast<long>(desc_a.cols()),
                              static_cast<long>(desc_b.cols())));

  const Eigen::MatrixXd sims = desc_a * desc_b.transpose();
  const int na = static_cast<int>(desc_a.rows());
  const int nb = static_cast<int>(desc_b.rows());

  // First/second nearest neighbors per row and per column. For unit vectors
  // the L2 distance is sqrt(2 - 2 cos), so nearest = largest similarity.
  std::vector<int> best_a(na), best_b(nb);
  std::vector<double> sim_a1(na), sim_a2(na, -std::numeric_limits<double>::infinity());
  std::vector<double> sim_b1(nb), sim_b2(nb, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < na; ++i) {
    int arg = 0;
    double s1 = -std::numeric_limits<double>::infinity(), s2 = s1;
    for (int j = 0; j < nb; ++j) {
      const double s = sims(i, j);
      if (s > s1) {
        s2 = s1;
        s1 = s;
        arg = j;
      } else if (s > s2) {
        s2 = s;
      }
    }
    best_a[i] = arg;
    sim_a1[i] = s1;
    sim_a2[i] = s2;
  }
  for (int j = 0; j < nb; ++j) {
    int arg = 0;
    double s1 = -std::numeric_limits<double>::infinity(), s2 = s1;
    for (int i = 0; i < na; ++i) {
      const double s = sims(i, j);
      if (s > s1) {
        s2 = s1;
        s1 = s;
        arg = i;
      } else if (s > s2) {
        s2 = s;
      }
    }
    best_b[j] = arg;
    sim_b1[j] = s1;
    sim_b2[j] = s2;
  }

  const auto cos_to_dist = [](double c) {
    return std::sqrt(std::max(0.0, 2.0 - 2.0 * c));
  };
  std::vector<MatchCandidate> out;
  for (int i = 0; i < na; ++i) {
    const int j = best_a[i];
    if (best_b[j] != i) continue;
    MatchCandidate c;
    c.index_a = i;
    c.index_b = j;
    c.similarity = sims(i, j);
    c.dist_a1 = cos_to_dist(sim_a1[i]);
    c.dist_b1 = cos_to_dist(sim_b1[j]);
    if (std::isfinite(sim_a2[i])) c.dist_a2 = cos_to_dist(sim_a2[i]);
    if (std::isfinite(sim_b2[j])) c.dist_b2 = cos_to_dist(sim_b2[j]);
    out.push_back(c);
  }
  return out;
}

std::vector<MatchCandidate> filter_matches(
    const std::vector<MatchCandidate>& candidates, FilterMode mode,
    double threshold) {
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw std::invalid_argument("filter_matches: threshold must be in (0, 1)");
  std::vector<MatchCandidate> out;
  for (const MatchCandidate& c : candidates) {
    bool keep = false;
    if (mode == FilterMode::Similarity) {
      keep = c.similarity >= threshold;
    } else {
      // Symmetric second-NN ratio test; a candidate without a second
      // neighbor (dist2 = inf) is kept.
      const double ra = std::isfinite(c.dist_a2) ? c.dist_a1 / c.dist_a2 : 0.0;
      const double rb = std::isfinite(c.dist_b2) ? c.dist_b1 / c.dist_b2 : 0.0;
      keep = ra < threshold && rb < threshold;
    }
    if (keep) out.push_back(c);
  }
  return out;
}

double connectivity_score(const MatchGraph& graph,
                          const std::vector<int>& track_of, int node_id) {
  double score = 0.0;
  for (const int e : graph.incident[node_id]) {
    const MatchEdge& edge = graph.edges[e];
    if (edge.from_node != node_id) continue;  // outgoing only
    if (track_of[edge.from_node] == track_of[edge.to_node])
      score += edge.similarity;
  }
  return score;
}

}  // namespace kpref

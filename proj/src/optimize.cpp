#include "kpref/optimize.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace kpref {

LossEval robust_loss(LossKind kind, double scale, double squared_norm) {
  if (squared_norm < 0.0)
    throw std::domain_error("robust_loss: squared norm must be >= 0");
  if (!(scale > 0.0))
    throw std::invalid_argument("robust_loss: scale must be positive");
  const double c2 = scale * scale;
  switch (kind) {
    case LossKind::None:
      return {squared_norm, 1.0};
    case LossKind::Cauchy: {
      const double a = 1.0 + squared_norm / c2;
      return {c2 * std::log(a), 1.0 / a};
    }
    case LossKind::Tukey: {
      if (squared_norm >= c2) return {c2 / 6.0, 0.0};
      const double a = 1.0 - squared_norm / c2;
      return {c2 / 6.0 * (1.0 - a * a * a), a * a};
    }
  }
  return {};
}

namespace {

// d(loss value)/d(squared norm), used for the gradient and the reweighted
// normal equations. For Tukey this is half the conventional IRLS weight
// returned by robust_loss: the weight is normalized to 1 at the origin,
// while the stated c^2/6 value convention has slope 1/2 there. The solver
// needs the exact slope of the value it minimizes, otherwise mixed
// Cauchy/Tukey problems would converge away from the reported objective's
// minimum.
double loss_slope(LossKind kind, double scale, double squared_norm) {
  const LossEval e = robust_loss(kind, scale, squared_norm);
  return kind == LossKind::Tukey ? 0.5 * e.derivative : e.derivative;
}

}  // namespace

void select_roots(const MatchGraph& graph, TrackAssignment& assignment) {
  assignment.root_of.assign(assignment.num_tracks(), -1);
  for (int t = 0; t < assignment.num_tracks(); ++t) {
    int best = -1;
    double best_score = -1.0;
    for (const int u : assignment.track_nodes[t]) {
      const double score = connectivity_score(graph, assignment.track_of, u);
      if (score > best_score) {  // ties keep the lowest node id
        best_score = score;
        best = u;
      }
    }
    assignment.root_of[t] = best;
  }
}

RefinementProblem build_problem(const MatchGraph& graph,
                                const TrackAssignment& assignment,
                                const std::vector<int>& component_tracks,
                                const SolverOptions& options) {
  RefinementProblem p;
  p.bound_k = options.bound_k;
  p.mode = options.mode;
  p.max_iterations = options.max_iterations;
  for (const int t : component_tracks)
    for (const int u : assignment.track_nodes[t]) p.nodes.push_back(u);
  std::sort(p.nodes.begin(), p.nodes.end());

  // Anchors: per-track roots, except in NoPartition mode where a single
  // node with the highest global similarity-weighted degree is fixed to
  // remove the translational gauge.
  if (options.mode == SolveMode::NoPartition) {
    int anchor = -1;
    double best = -1.0;
    for (const int u : p.nodes) {
      double degree = 0.0;
      for (const int e : graph.incident[u])
        if (graph.edges[e].from_node == u) degree += graph.edges[e].similarity;
      if (degree > best) {
        best = degree;
        anchor = u;
      }
    }
    if (anchor >= 0) p.fixed.push_back(anchor);
  } else {
    for (const int t : component_tracks) {
      const int root = assignment.root_of[t];
      if (root < 0)
        throw std::invalid_argument(
            "build_problem: roots must be selected before assembly");
      p.fixed.push_back(root);
    }
    std::sort(p.fixed.begin(), p.fixed.end());
  }

  const EdgeClassification classes =
      classify_edges(graph, assignment, component_tracks);
  const auto add_block = [&](int edge_id, LossKind kind, double scale) {
    const MatchEdge& edge = graph.edges[edge_id];
    if (!edge.flow)
      throw DataError(strformat(
          "edge %d->%d has no flow field; run align or provide --flows",
          edge.from_node, edge.to_node));
    ResidualBlock b;
    b.edge_id = edge_id;
    b.from_node = edge.from_node;
    b.to_node = edge.to_node;
    b.weight = std::max(edge.similarity, kSimilarityFloor);
    if (edge.flow->low_confidence) b.weight *= options.low_confidence_downweight;
    b.kind = kind;
    b.scale = scale;
    b.flow = &*edge.flow;
    p.blocks.push_back(b);
  };

  const bool robust_intra = options.cauchy_scale > 0.0;
  const LossKind intra_kind = robust_intra ? LossKind::Cauchy : LossKind::None;
  const double intra_scale = robust_intra ? options.cauchy_scale : 1.0;
  for (const int e : classes.intra) add_block(e, intra_kind, intra_scale);
  switch (options.mode) {
    case SolveMode::IntraOnly:
      break;  // inter-edges are dropped entirely
    case SolveMode::NoPartition:
      // No partitioning: every edge is treated alike under the soft loss.
      for (const int e : classes.inter) add_block(e, intra_kind, intra_scale);
      break;
    case SolveMode::Full:
    case SolveMode::IntraInter:
      for (const int e : classes.inter)
        add_block(e, LossKind::Tukey, options.tukey_scale);
      break;
  }

  p.var_of_node.assign(graph.nodes.size(), -1);
  std::vector<char> is_fixed(graph.nodes.size(), 0);
  for (const int u : p.fixed) is_fixed[u] = 1;
  for (const int u : p.nodes)
    if (!is_fixed[u]) p.var_of_node[u] = p.num_free++;
  return p;
}

double objective_value(const RefinementProblem& problem,
                       const std::vector<Vec2>& offsets) {
  double total = 0.0;
  for (const ResidualBlock& b : problem.blocks) {
    const Vec2& xu = offsets[b.from_node];
    const Vec2& xv = offsets[b.to_node];
    const Vec2 r = xv - xu - eval_flow(*b.flow, xu).displacement;
    total += b.weight * robust_loss(b.kind, b.scale, r.squaredNorm()).value;
  }
  return total;
}

Vec2 project_l1_ball(const Vec2& v, double k) {
  const double ax = std::abs(v.x());
  const double ay = std::abs(v.y());
  if (ax + ay <= k) return v;
  const double hi = std::max(ax, ay);
  const double lo = std::min(ax, ay);
  // Soft-threshold with the exact shrinkage for two coordinates.
  const double theta = hi - k >= lo ? hi - k : 0.5 * (hi + lo - k);
  const auto shrink = [theta](double w) {
    const double m = std::abs(w) - theta;
    return m > 0.0 ? (w > 0.0 ? m : -m) : 0.0;
  };
  return {shrink(v.x()), shrink(v.y())};
}

namespace {

struct NormalEquations {
  Eigen::VectorXd gradient;
  // Dense for small components, sparse beyond.
  Eigen::MatrixXd dense;
  std::vector<Eigen::Triplet<double>> triplets;
  bool use_dense = true;
};

constexpr int kDenseVariableLimit = 128;

void assemble(const RefinementProblem& p, const std::vector<Vec2>& offsets,
              NormalEquations& eq) {
  const int dim = 2 * p.num_free;
  eq.gradient.setZero(dim);
  if (eq.use_dense)
    eq.dense.setZero(dim, dim);
  else
    eq.triplets.clear();

  const auto add_h = [&](int row, int col, const Mat2& block) {
    if (eq.use_dense) {
      eq.dense.block<2, 2>(2 * row, 2 * col) += block;
    } else {
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          eq.triplets.emplace_back(2 * row + a, 2 * col + b, block(a, b));
    }
  };

  for (const ResidualBlock& blk : p.blocks) {
    const int vu = p.var_of_node[blk.from_node];
    const int vv = p.var_of_node[blk.to_node];
    if (vu < 0 && vv < 0) continue;  // both endpoints anchored

    const Vec2& xu = offsets[blk.from_node];
    const Vec2& xv = offsets[blk.to_node];
    const FlowEval flow = eval_flow(*blk.flow, xu);
    const Vec2 r = xv - xu - flow.displacement;
    if (!r.allFinite() || !flow.jacobian.allFinite())
      throw std::runtime_error(strformat(
          "non-finite residual or jacobian on edge %d->%d", blk.from_node,
          blk.to_node));
    const double w =
        2.0 * blk.weight * loss_slope(blk.kind, blk.scale, r.squaredNorm());
    if (w == 0.0) continue;  // saturated Tukey block

    // d r / d xu = -I - dT/dxu, d r / d xv = I.
    const Mat2 ju = -Mat2::Identity() - flow.jacobian;
    if (vu >= 0) {
      eq.gradient.segment<2>(2 * vu) += w * ju.transpose() * r;
      add_h(vu, vu, w * ju.transpose() * ju);
    }
    if (vv >= 0) {
      eq.gradient.segment<2>(2 * vv) += w * r;
      add_h(vv, vv, w * Mat2::Identity());
    }
    if (vu >= 0 && vv >= 0) {
      const Mat2 cross = w * ju.transpose();
      add_h(vu, vv, cross);
      add_h(vv, vu, cross.transpose());
    }
  }
}

}  // namespace

SolveReport solve_component(const RefinementProblem& problem,
                            std::vector<Vec2>& offsets) {
  SolveReport report;
  report.initial_objective = objective_value(problem, offsets);
  report.final_objective = report.initial_objective;
  if (problem.num_free == 0) {
    report.converged = true;
    return report;
  }

  const int dim = 2 * problem.num_free;
  NormalEquations eq;
  eq.use_dense = problem.num_free <= kDenseVariableLimit;

  std::vector<int> node_of_var(problem.num_free, -1);
  for (const int u : problem.nodes)
    if (problem.var_of_node[u] >= 0) node_of_var[problem.var_of_node[u]] = u;
  const std::vector<Vec2> start = offsets;

  Eigen::SparseMatrix<double> sparse(dim, dim);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> sparse_solver;
  bool pattern_analyzed = false;

  double lambda = 1e-4;
  double objective = report.initial_objective;
  bool recompute = true;
  std::vector<Vec2> trial = offsets;

  while (report.iterations < problem.max_iterations) {
    ++report.iterations;
    if (recompute) {
      assemble(problem, offsets, eq);
      recompute = false;
    }

    // Marquardt damping on the diagonal; empty rows (all blocks saturated)
    // get a unit diagonal so the system stays regular.
    Eigen::VectorXd step(dim);
    if (eq.use_dense) {
      Eigen::MatrixXd h = eq.dense;
      for (int i = 0; i < dim; ++i) {
        const double d = h(i, i) > 1e-12 ? h(i, i) : 1.0;
        h(i, i) += lambda * d;
      }
      step = Eigen::LDLT<Eigen::MatrixXd>(h).solve(-eq.gradient);
    } else {
      std::vector<Eigen::Triplet<double>> t = eq.triplets;
      Eigen::SparseMatrix<double> base(dim, dim);
      base.setFromTriplets(eq.triplets.begin(), eq.triplets.end());
      Eigen::VectorXd diag = base.diagonal();
      for (int i = 0; i < dim; ++i) {
        const double d = diag(i) > 1e-12 ? diag(i) : 1.0;
        t.emplace_back(i, i, lambda * d);
      }
      sparse.setFromTriplets(t.begin(), t.end());
      if (!pattern_analyzed) {
        sparse_solver.analyzePattern(sparse);
        pattern_analyzed = true;
      }
      sparse_solver.factorize(sparse);
      if (sparse_solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      step = sparse_solver.solve(-eq.gradient);
    }
    if (!step.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e14) break;
      continue;
    }

    // Trial point: take the step, then project every variable back onto the
    // L1 ball so the bound holds after each accepted step.
    double moved = 0.0;
    for (int v = 0; v < problem.num_free; ++v) {
      const int u = node_of_var[v];
      const Vec2 candidate = offsets[u] + step.segment<2>(2 * v);
      trial[u] = project_l1_ball(candidate, problem.bound_k);
      moved = std::max(moved, (trial[u] - offsets[u]).norm());
    }
    const double trial_objective = objective_value(problem, trial);

    if (trial_objective < objective) {
      for (int v = 0; v < problem.num_free; ++v) {
        const int u = node_of_var[v];
        offsets[u] = trial[u];
      }
      const double decrease = objective - trial_objective;
      objective = trial_objective;
      ++report.accepted_steps;
      report.max_step = std::max(report.max_step, moved);
      lambda = std::max(lambda * 0.3, 1e-12);
      recompute = true;
      if (decrease < 1e-8 * std::max(objective + decrease, 1e-300) ||
          moved < 1e-4) {
        report.converged = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e14) {
        // No descent direction at damping precision: treat as converged.
        report.converged = true;
        break;
      }
    }
  }

  report.final_objective = objective;
  for (const int u : problem.nodes)
    report.max_moved = std::max(report.max_moved, (offsets[u] - start[u]).norm());
  return report;
}

std::vector<std::pair<Vec2, int>> refine_query(
    const Vec2& initial, const std::vector<QueryHypothesis>& hypotheses) {
  std::vector<std::pair<Vec2, int>> out;
  out.reserve(hypotheses.size());
  for (const QueryHypothesis& h : hypotheses) {
    if (h.observations.empty())
      throw std::invalid_argument("refine_query: empty hypothesis");
    Vec2 weighted = Vec2::Zero();
    double total = 0.0;
    for (const auto& [sim, flow] : h.observations) {
      if (!(sim > 0.0))
        throw std::invalid_argument("refine_query: similarities must be > 0");
      weighted += sim * flow;
      total += sim;
    }
    out.emplace_back(initial + weighted / total, h.hypothesis_id);
  }
  return out;
}

}  // namespace kpref

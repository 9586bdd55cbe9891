#pragma once

#include "kpref/partition.hpp"

namespace kpref {

enum class LossKind { None, Cauchy, Tukey };

struct LossEval {
  double value = 0.0;
  double derivative = 0.0;
};

/// Robust loss applied to a squared residual norm s.
///   Cauchy: value = c^2 log(1 + s/c^2),               derivative = 1/(1 + s/c^2)
///   Tukey:  value = (c^2/6)(1 - (1 - s/c^2)^3), s<=c^2, else c^2/6
///           derivative = (1 - s/c^2)^2,         s<=c^2, else 0
///   None:   value = s, derivative = 1
/// The derivative is the conventional IRLS weight, normalized so that every
/// kind returns 1 at s = 0. Throws std::domain_error for s < 0.
LossEval robust_loss(LossKind kind, double scale, double squared_norm);

enum class SolveMode { Full, NoPartition, IntraOnly, IntraInter };

struct SolverOptions {
  double bound_k = 16.0;  // L1 ball radius per keypoint, pixels
  double cauchy_scale = 4.0;
  double tukey_scale = 1.0;
  SolveMode mode = SolveMode::Full;
  int max_iterations = 200;
  double low_confidence_downweight = 0.1;
};

/// Fills assignment.root_of: per track, the node with the highest
/// connectivity score (ties broken by lowest node id).
void select_roots(const MatchGraph& graph, TrackAssignment& assignment);

/// One residual x_v - x_u - T(x_u) with its robust loss and weight.
struct ResidualBlock {
  int edge_id = -1;
  int from_node = -1;
  int to_node = -1;
  double weight = 0.0;  // similarity (floored), times 0.1 if low confidence
  LossKind kind = LossKind::Cauchy;
  double scale = 1.0;
  const FlowField* flow = nullptr;
};

/// Bounded robust least-squares problem for one component.
struct RefinementProblem {
  std::vector<int> nodes;        // node ids in the component
  std::vector<int> fixed;        // anchored node ids (offset pinned to 0)
  std::vector<ResidualBlock> blocks;
  std::vector<int> var_of_node;  // node id -> free-variable slot, -1 if fixed/absent
  int num_free = 0;
  double bound_k = 16.0;
  SolveMode mode = SolveMode::Full;
  int max_iterations = 200;
};

/// Assembles the problem for the tracks in `component_tracks`. Intra-edges
/// use the Cauchy loss and inter-edges the Tukey loss; IntraOnly drops inter
/// blocks; NoPartition treats every edge as intra and anchors only the node
/// with the highest global similarity-weighted degree. Roots must be selected
/// beforehand (except in NoPartition mode). Throws DataError if an in-scope
/// edge has no flow field.
RefinementProblem build_problem(const MatchGraph& graph,
                                const TrackAssignment& assignment,
                                const std::vector<int>& component_tracks,
                                const SolverOptions& options);

/// Objective of the problem at the given offsets, evaluated with exactly the
/// terms the solver minimizes.
double objective_value(const RefinementProblem& problem,
                       const std::vector<Vec2>& offsets);

struct SolveReport {
  int iterations = 0;        // linear-solve trials performed
  int accepted_steps = 0;
  double initial_objective = 0.0;
  double final_objective = 0.0;
  double max_step = 0.0;      // largest accepted per-variable step, pixels
  double max_moved = 0.0;     // largest total per-node displacement, pixels
  bool converged = false;
};

/// Levenberg-Marquardt with robust reweighting and analytic jacobians
/// (including the flow-field jacobian). After every accepted step each
/// variable is projected onto the L1 ball of radius K, so the constraint
/// holds at all times. `offsets` is indexed by node id and is updated for
/// free nodes of this problem only.
SolveReport solve_component(const RefinementProblem& problem,
                            std::vector<Vec2>& offsets);

/// One localization hypothesis: similarity-weighted one-directional flows
/// toward the query from views of a single 3D point.
struct QueryHypothesis {
  int hypothesis_id = -1;
  std::vector<std::pair<double, Vec2>> observations;  // (similarity, flow)
};

/// Closed-form query refinement: per hypothesis, the refined point is the
/// initial location plus the similarity-weighted mean flow.
std::vector<std::pair<Vec2, int>> refine_query(
    const Vec2& initial, const std::vector<QueryHypothesis>& hypotheses);

/// Euclidean projection onto the L1 ball of radius k centered at the origin.
Vec2 project_l1_ball(const Vec2& v, double k);

}  // namespace kpref

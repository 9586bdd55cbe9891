#pragma once

#include "kpref/common.hpp"

#include <array>

namespace kpref {

/// Local flow field between two matched keypoints, approximated by a 3x3
/// displacement grid. grid[gy][gx] holds the displacement (pixels, extraction
/// scale) for the grid offset (gx, gy) * spacing around the source keypoint;
/// index 0/1/2 corresponds to offset -1/0/+1.
struct FlowField {
  std::array<std::array<Vec2, 3>, 3> grid{};
  double spacing = 8.0;
  int from_node = -1;
  int to_node = -1;
  bool low_confidence = false;

  Vec2& at(int gx, int gy) { return grid[gy + 1][gx + 1]; }
  const Vec2& at(int gx, int gy) const { return grid[gy + 1][gx + 1]; }
};

struct FlowEval {
  Vec2 displacement = Vec2::Zero();
  Mat2 jacobian = Mat2::Zero();  // d displacement / d offset
};

/// Evaluates the flow field at an offset from the source keypoint using
/// separable quadratic Lagrange interpolation over the 3x3 grid. Offsets
/// outside [-spacing, +spacing] are clamped per coordinate (replicate
/// padding); the jacobian is zero along any clamped coordinate.
FlowEval eval_flow(const FlowField& field, const Vec2& offset);

/// Convenience: a flow field whose nine grid values all equal d.
FlowField constant_flow(const Vec2& d, double spacing = 8.0);

}  // namespace kpref

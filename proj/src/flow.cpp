#include "kpref/flow.hpp"

#include <algorithm>
#include <cmath>

namespace kpref {

namespace {

// Quadratic Lagrange basis on nodes {-1, 0, +1} and its derivative.
inline void lagrange3(double t, double basis[3], double deriv[3]) {
  basis[0] = 0.5 * t * (t - 1.0);
  basis[1] = 1.0 - t * t;
  basis[2] = 0.5 * t * (t + 1.0);
  deriv[0] = t - 0.5;
  deriv[1] = -2.0 * t;
  deriv[2] = t + 0.5;
}

}  // namespace

FlowEval eval_flow(const FlowField& field, const Vec2& offset) {
  const double s = field.spacing;
  const bool clamped_x = offset.x() < -s || offset.x() > s;
  const bool clamped_y = offset.y() < -s || offset.y() > s;
  const double tx = std::clamp(offset.x(), -s, s) / s;
  const double ty = std::clamp(offset.y(), -s, s) / s;

  double bx[3], dx[3], by[3], dy[3];
  lagrange3(tx, bx, dx);
  lagrange3(ty, by, dy);

  FlowEval out;
  for (int gy = 0; gy < 3; ++gy) {
    for (int gx = 0; gx < 3; ++gx) {
      const Vec2& v = field.grid[gy][gx];
      out.displacement += bx[gx] * by[gy] * v;
      out.jacobian.col(0) += dx[gx] * by[gy] / s * v;
      out.jacobian.col(1) += bx[gx] * dy[gy] / s * v;
    }
  }
  // Replicate padding: constant outside the grid, so the derivative along a
  // clamped coordinate vanishes.
  if (clamped_x) out.jacobian.col(0).setZero();
  if (clamped_y) out.jacobian.col(1).setZero();
  return out;
}

FlowField constant_flow(const Vec2& d, double spacing) {
  FlowField f;
  f.spacing = spacing;
  for (auto& row : f.grid)
    for (auto& v : row) v = d;
  return f;
}

}  // namespace kpref

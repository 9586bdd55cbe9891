#pragma once

#include "kpref/graph.hpp"

#include <Eigen/Dense>

namespace kpref {

/// Square patch of bilinearly sampled intensities. samples[r * size + c] is
/// taken at center + scale * (c - (size-1)/2, r - (size-1)/2).
struct Patch {
  Vec2 center = Vec2::Zero();
  double scale = 1.0;  // pixels per sample
  int size = 0;        // odd
  std::vector<double> samples;

  double at(int c, int r) const {
    return samples[static_cast<std::size_t>(r) * size + c];
  }
};

/// Grid of unit-norm local descriptors extracted from a patch. data row
/// (i * w + j) is the descriptor at grid node (i, j); all-constant
/// neighborhoods yield the zero vector.
struct DescriptorGrid {
  int h = 0, w = 0, dim = 0;
  Eigen::MatrixXd data;  // (h*w) x dim
};

/// Channel-normalized correlation volume. values(i * w + j, k) scores grid
/// cell (i, j) of the source against cell k = i2 * w + j2 of the target,
/// after ReLU and per-cell channel L2 normalization.
struct CorrelationVolume {
  int h = 0, w = 0;
  Eigen::MatrixXd values;  // (h*w) x (h*w), all entries >= 0
};

struct CentralFlow {
  Vec2 flow = Vec2::Zero();
  bool low_confidence = false;  // all-zero correlation (textureless)
};

struct AlignOptions {
  int patch_size = 33;     // odd
  int grid_size = 17;      // odd, <= patch_size
  double spacing = 8.0;    // flow grid spacing in pixels
  double fine_zoom = 2.0;  // fine pass samples at scale 1/fine_zoom
  int max_long_edge = 1600;
};

/// Bilinear sample with replicate border.
double sample_bilinear(const ImageRef& image, double x, double y);

/// Extracts a size x size patch around center; throws DataError when the
/// image carries no pixel data (precomputed-flow inputs).
Patch sample_patch(const ImageRef& image, const Vec2& center, double scale,
                   int size);

/// Densely extracts mean-subtracted, L2-normalized 3x3 intensity descriptors
/// on a grid_size x grid_size lattice over the patch.
DescriptorGrid dense_descriptors(const Patch& patch, int grid_size);

/// Dot-product correlation of two descriptor grids followed by ReLU and
/// channel L2 normalization, which lowers the score of ambiguous matches.
CorrelationVolume correlate_normalize(const DescriptorGrid& a,
                                      const DescriptorGrid& b);

/// Reads the central cell's channel vector, takes the peak over target grid
/// positions and refines it with a per-axis quadratic fit (clamped to half a
/// cell). Returns the displacement in pixels.
CentralFlow regress_central_flow(const CorrelationVolume& volume,
                                 double cell_size);

/// Central-pixel flow from image_u at u to image_v at v, with patches sampled
/// at `scale` pixels per sample. Equivalent to the sample_patch ->
/// dense_descriptors -> correlate_normalize -> regress_central_flow chain
/// (only the central cell's correlations are materialized).
CentralFlow predict_central_flow(const ImageRef& image_u, const Vec2& u,
                                 const ImageRef& image_v, const Vec2& v,
                                 double scale, const AlignOptions& opt = {});

/// Coarse-to-fine flow field estimation: a coarse central flow at extraction
/// scale, then one fine alignment per 3x3 grid offset on zoomed sub-patches.
FlowField estimate_flow_field(const ImageRef& image_u, const Vec2& u,
                              const ImageRef& image_v, const Vec2& v,
                              const AlignOptions& opt = {});

/// Estimates and attaches a flow field to every directed edge of the graph.
/// Edges are processed in id order; results are independent of the thread
/// count.
void annotate_graph_flows(MatchGraph& graph, const AlignOptions& opt,
                          int threads = 1);

/// Downsamples the image so its longest edge is at most max_long_edge and
/// returns the applied scale factor (1 when unchanged). Keypoint coordinates
/// must be multiplied by the same factor.
double enforce_max_long_edge(ImageRef& image, int max_long_edge);

}  // namespace kpref

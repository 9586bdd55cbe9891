#pragma once

#include "kpref/graph.hpp"

#include <random>

namespace kpref {

/// Applies a 3x3 homography to a 2D point.
Vec2 apply_homography(const Mat3& h, const Vec2& p);

/// Band-limited procedural texture: a seeded sum of smooth cosine waves with
/// wavelengths in [8, 48] px, normalized to values in [0, 1].
struct BumpTexture {
  struct Wave {
    Vec2 frequency;  // radians per pixel
    double phase = 0.0;
    double amplitude = 0.0;
  };
  std::vector<Wave> waves;
  double offset = 0.5;

  double value(const Vec2& p) const;
};

BumpTexture make_texture(std::uint64_t seed, int num_waves = 24);

/// Planar multi-view scene with known homographies and exact ground truth.
struct SyntheticScene {
  BumpTexture texture;
  int width = 0, height = 0;
  std::vector<Mat3> views;        // H_i: canonical plane -> view i pixels
  std::vector<ImageRef> images;   // rendered texture o H_i^-1
  std::vector<Vec2> canonical;    // true scene points on the canonical plane
  std::vector<std::vector<Vec2>> projections;  // view -> per-keypoint H_i(p)

  int num_views() const { return static_cast<int>(views.size()); }
  int num_keypoints() const { return static_cast<int>(canonical.size()); }
  // H_j o H_i^-1: view i pixels -> view j pixels
  Mat3 pair_homography(int view_i, int view_j) const;
};

/// Deterministic scene generation. View 0 is the identity; the remaining
/// views get random similarity + mild projective warps scaled by
/// homography_magnitude. Keypoints are resampled until every projection
/// stays at least `border_margin` pixels inside every view (error after
/// 1000 attempts). Rendering may use several threads; output is identical
/// for any thread count.
SyntheticScene generate_scene(std::uint64_t seed, int num_views,
                              int image_size, int num_keypoints,
                              double homography_magnitude = 1.0,
                              double border_margin = 40.0, int threads = 1);

/// Ground-truth flow field between two views: grid[g] = H_ij(u0+g) - v0 - g,
/// which makes the optimization residual vanish exactly when x_v = H_ij(x_u).
/// Optional isotropic Gaussian noise (per grid node) models prediction error.
FlowField oracle_flow_field(const SyntheticScene& scene, int view_i,
                            const Vec2& u0, int view_j, const Vec2& v0,
                            double spacing);
FlowField oracle_flow_field(const SyntheticScene& scene, int view_i,
                            const Vec2& u0, int view_j, const Vec2& v0,
                            double spacing, double noise_sigma,
                            std::mt19937_64& rng);

enum class PerturbKind { Uniform, Gaussian };

/// Per-view keypoint perturbation: Uniform draws each coordinate from
/// [-param, param], Gaussian from N(0, param^2). Deterministic given seed.
std::vector<std::vector<Vec2>> perturb_keypoints(const SyntheticScene& scene,
                                                 PerturbKind kind,
                                                 double param,
                                                 std::uint64_t seed);

/// Mean matching accuracy curve over image pairs.
struct MMACurve {
  std::vector<double> thresholds;
  std::vector<double> accuracy;  // mean fraction of matches within threshold
  double accuracy_at_zero = 0.0;  // mean fraction of exactly-zero errors
  int pairs_used = 0;
  int pairs_empty = 0;  // pairs with no matches, excluded from the mean
};

/// accuracy(t) = mean over pairs of the fraction of matches with error <= t.
/// Thresholds must be ascending and positive.
MMACurve evaluate_mma(const std::vector<std::vector<double>>& per_pair_errors,
                      std::vector<double> thresholds);

/// Trapezoidal area under the polyline (0, accuracy_at_zero), (t_1, a_1), ...
/// on [0, cutoff], divided by cutoff. The curve extends flat past the last
/// threshold.
double mma_auc(const MMACurve& curve, double cutoff);

/// Canonical-plane point minimizing the squared reprojection error against
/// one observation per view. Views and observations must have equal length.
Vec2 estimate_consensus_point(const std::vector<Mat3>& views,
                              const std::vector<Vec2>& observations);

/// RMS reprojection error of per-view keypoint positions against per-track
/// consensus points (the planar analog of triangulation reprojection error).
double rms_reprojection_error(const SyntheticScene& scene,
                              const std::vector<std::vector<Vec2>>& positions);

/// RMS distance to the true projections (absolute error; gauge-dependent).
double rms_error_vs_truth(const SyntheticScene& scene,
                          const std::vector<std::vector<Vec2>>& positions);

}  // namespace kpref

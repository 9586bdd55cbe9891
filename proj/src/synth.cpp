#include "kpref/synth.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace kpref {

Vec2 apply_homography(const Mat3& h, const Vec2& p) {
  const double w = h(2, 0) * p.x() + h(2, 1) * p.y() + h(2, 2);
  return {(h(0, 0) * p.x() + h(0, 1) * p.y() + h(0, 2)) / w,
          (h(1, 0) * p.x() + h(1, 1) * p.y() + h(1, 2)) / w};
}

double BumpTexture::value(const Vec2& p) const {
  double v = offset;
  for (const Wave& w : waves)
    v += w.amplitude * std::cos(w.frequency.dot(p) + w.phase);
  return v;
}

BumpTexture make_texture(std::uint64_t seed, int num_waves) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  BumpTexture tex;
  tex.waves.resize(num_waves);
  double amplitude_sum = 0.0;
  for (auto& w : tex.waves) {
    // Wavelengths log-uniform in [8, 48] px keep 33x33 patches textured
    // without aliasing; longer waves get more weight for smoothness.
    const double wavelength = 8.0 * std::pow(6.0, unit(rng));
    const double angle = 2.0 * std::numbers::pi * unit(rng);
    const double k = 2.0 * std::numbers::pi / wavelength;
    w.frequency = Vec2(k * std::cos(angle), k * std::sin(angle));
    w.phase = 2.0 * std::numbers::pi * unit(rng);
    w.amplitude = wavelength;
    amplitude_sum += w.amplitude;
  }
  // Normalize so values stay within [0.05, 0.95] for any input point.
  for (auto& w : tex.waves) w.amplitude *= 0.45 / amplitude_sum;
  return tex;
}

Mat3 SyntheticScene::pair_homography(int view_i, int view_j) const {
  return views[view_j] * views[view_i].inverse();
}

SyntheticScene generate_scene(std::uint64_t seed, int num_views,
                              int image_size, int num_keypoints,
                              double homography_magnitude,
                              double border_margin, int threads) {
  if (num_views < 2)
    throw std::invalid_argument("generate_scene: at least two views required");
  if (image_size < 4 * border_margin)
    throw std::invalid_argument("generate_scene: image too small for margin");

  SyntheticScene scene;
  scene.texture = make_texture(seed * 0x9e3779b97f4a7c15ull + 1);
  scene.width = scene.height = image_size;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double cx = image_size / 2.0, cy = image_size / 2.0;
  Mat3 recenter = Mat3::Identity(), center = Mat3::Identity();
  recenter(0, 2) = -cx;
  recenter(1, 2) = -cy;
  center(0, 2) = cx;
  center(1, 2) = cy;

  scene.views.push_back(Mat3::Identity());
  for (int i = 1; i < num_views; ++i) {
    const double m = homography_magnitude;
    const double angle = 0.05 * m * unit(rng);
    const double scale = 1.0 + 0.05 * m * unit(rng);
    const double tx = 8.0 * m * unit(rng);
    const double ty = 8.0 * m * unit(rng);
    const double px = 3e-5 * m * unit(rng);
    const double py = 3e-5 * m * unit(rng);
    Mat3 core;
    core << scale * std::cos(angle), -scale * std::sin(angle), tx,
        scale * std::sin(angle), scale * std::cos(angle), ty,
        px, py, 1.0;
    scene.views.push_back(center * core * recenter);
  }

  scene.images.resize(num_views);
  parallel_for(num_views, threads, [&](int i) {
    ImageRef& img = scene.images[i];
    img.image_id = i;
    img.width = img.height = image_size;
    img.pixels.resize(static_cast<std::size_t>(image_size) * image_size);
    const Mat3 inverse = scene.views[i].inverse();
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x)
        img.pixels[static_cast<std::size_t>(y) * image_size + x] =
            scene.texture.value(apply_homography(inverse, Vec2(x, y)));
  });

  std::uniform_real_distribution<double> inside(border_margin,
                                                image_size - border_margin);
  scene.projections.assign(num_views, {});
  for (int k = 0; k < num_keypoints; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const Vec2 p(inside(rng), inside(rng));
      std::vector<Vec2> projs(num_views);
      placed = true;
      for (int i = 0; i < num_views && placed; ++i) {
        projs[i] = apply_homography(scene.views[i], p);
        placed = projs[i].x() >= border_margin &&
                 projs[i].x() <= image_size - border_margin &&
                 projs[i].y() >= border_margin &&
                 projs[i].y() <= image_size - border_margin;
      }
      if (placed) {
        scene.canonical.push_back(p);
        for (int i = 0; i < num_views; ++i)
          scene.projections[i].push_back(projs[i]);
      }
    }
    if (!placed)
      throw DataError(strformat(
          "generate_scene: keypoint %d could not be placed away from the "
          "borders after 1000 attempts; lower homography_magnitude",
          k));
  }
  return scene;
}

FlowField oracle_flow_field(const SyntheticScene& scene, int view_i,
                            const Vec2& u0, int view_j, const Vec2& v0,
                            double spacing) {
  const Mat3 h = scene.pair_homography(view_i, view_j);
  FlowField field;
  field.spacing = spacing;
  for (int gy = -1; gy <= 1; ++gy) {
    for (int gx = -1; gx <= 1; ++gx) {
      const Vec2 g(gx * spacing, gy * spacing);
      field.at(gx, gy) = apply_homography(h, u0 + g) - v0 - g;
    }
  }
  return field;
}

FlowField oracle_flow_field(const SyntheticScene& scene, int view_i,
                            const Vec2& u0, int view_j, const Vec2& v0,
                            double spacing, double noise_sigma,
                            std::mt19937_64& rng) {
  FlowField field = oracle_flow_field(scene, view_i, u0, view_j, v0, spacing);
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& row : field.grid)
      for (auto& v : row) v += Vec2(noise(rng), noise(rng));
  }
  return field;
}

std::vector<std::vector<Vec2>> perturb_keypoints(const SyntheticScene& scene,
                                                 PerturbKind kind,
                                                 double param,
                                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-param, param);
  std::normal_distribution<double> gaussian(0.0, param);
  auto draw = [&]() {
    return kind == PerturbKind::Uniform ? uniform(rng) : gaussian(rng);
  };
  std::vector<std::vector<Vec2>> out(scene.num_views());
  for (int i = 0; i < scene.num_views(); ++i) {
    out[i].reserve(scene.num_keypoints());
    for (const Vec2& p : scene.projections[i]) {
      const double dx = draw();
      const double dy = draw();
      out[i].push_back(p + Vec2(dx, dy));
    }
  }
  return out;
}

MMACurve evaluate_mma(const std::vector<std::vector<double>>& per_pair_errors,
                      std::vector<double> thresholds) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] <= 0.0 || (i > 0 && thresholds[i] <= thresholds[i - 1]))
      throw std::invalid_argument(
          "evaluate_mma: thresholds must be positive and ascending");
  }
  MMACurve curve;
  curve.thresholds = std::move(thresholds);
  curve.accuracy.assign(curve.thresholds.size(), 0.0);
  for (const auto& errors : per_pair_errors) {
    if (errors.empty()) {
      ++curve.pairs_empty;
      continue;
    }
    ++curve.pairs_used;
    int zero = 0;
    for (const double e : errors)
      if (e <= 0.0) ++zero;
    curve.accuracy_at_zero += static_cast<double>(zero) / errors.size();
    for (std::size_t t = 0; t < curve.thresholds.size(); ++t) {
      int within = 0;
      for (const double e : errors)
        if (e <= curve.thresholds[t]) ++within;
      curve.accuracy[t] += static_cast<double>(within) / errors.size();
    }
  }
  if (curve.pairs_used > 0) {
    curve.accuracy_at_zero /= curve.pairs_used;
    for (double& a : curve.accuracy) a /= curve.pairs_used;
  }
  return curve;
}

double mma_auc(const MMACurve& curve, double cutoff) {
  if (!(cutoff > 0.0)) throw std::invalid_argument("mma_auc: cutoff <= 0");
  double area = 0.0;
  double prev_t = 0.0, prev_a = curve.accuracy_at_zero;
  for (std::size_t i = 0; i <= curve.thresholds.size(); ++i) {
    // Flat extension past the last threshold.
    const double t = i < curve.thresholds.size() ? curve.thresholds[i] : cutoff;
    const double a = i < curve.thresholds.size() ? curve.accuracy[i] : prev_a;
    if (t >= cutoff) {
      const double span = cutoff - prev_t;
      if (span > 0.0) {
        const double a_cut =
            t > prev_t ? prev_a + (a - prev_a) * span / (t - prev_t) : a;
        area += 0.5 * (prev_a + a_cut) * span;
      }
      return area / cutoff;
    }
    area += 0.5 * (prev_a + a) * (t - prev_t);
    prev_t = t;
    prev_a = a;
  }
  return area / cutoff;
}

Vec2 estimate_consensus_point(const std::vector<Mat3>& views,
                              const std::vector<Vec2>& observations) {
  if (views.size() != observations.size() || views.empty())
    throw std::invalid_argument(
        "estimate_consensus_point: one observation per view required");
  Vec2 p = Vec2::Zero();
  for (std::size_t i = 0; i < views.size(); ++i)
    p += apply_homography(views[i].inverse(), observations[i]);
  p /= static_cast<double>(views.size());

  for (int iter = 0; iter < 10; ++iter) {
    Mat2 hessian = Mat2::Zero();
    Vec2 gradient = Vec2::Zero();
    for (std::size_t i = 0; i < views.size(); ++i) {
      const Mat3& h = views[i];
      const double w = h(2, 0) * p.x() + h(2, 1) * p.y() + h(2, 2);
      const Vec2 q = apply_homography(h, p);
      Mat2 jac;
      jac << (h(0, 0) - q.x() * h(2, 0)) / w, (h(0, 1) - q.x() * h(2, 1)) / w,
          (h(1, 0) - q.y() * h(2, 0)) / w, (h(1, 1) - q.y() * h(2, 1)) / w;
      const Vec2 r = q - observations[i];
      hessian += jac.transpose() * jac;
      gradient += jac.transpose() * r;
    }
    const Vec2 step = hessian.ldlt().solve(-gradient);
    p += step;
    if (step.norm() < 1e-12) break;
  }
  return p;
}

double rms_reprojection_error(const SyntheticScene& scene,
                              const std::vector<std::vector<Vec2>>& positions) {
  double sum = 0.0;
  long count = 0;
  std::vector<Vec2> obs(scene.num_views());
  for (int k = 0; k < scene.num_keypoints(); ++k) {
    for (int i = 0; i < scene.num_views(); ++i) obs[i] = positions[i][k];
    const Vec2 consensus = estimate_consensus_point(scene.views, obs);
    for (int i = 0; i < scene.num_views(); ++i) {
      sum += (apply_homography(scene.views[i], consensus) - obs[i]).squaredNorm();
      ++count;
    }
  }
  return count > 0 ? std::sqrt(sum / count) : 0.0;
}

double rms_error_vs_truth(const SyntheticScene& scene,
                          const std::vector<std::vector<Vec2>>& positions) {
  double sum = 0.0;
  long count = 0;
  for (int i = 0; i < scene.num_views(); ++i) {
    for (int k = 0; k < scene.num_keypoints(); ++k) {
      sum += (positions[i][k] - scene.projections[i][k]).squaredNorm();
      ++count;
    }
  }
  return count > 0 ? std::sqrt(sum / count) : 0.0;
}

}  // namespace kpref

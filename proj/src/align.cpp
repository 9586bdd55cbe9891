#include "kpref/align.hpp"

#include <cmath>

namespace kpref {

double sample_bilinear(const ImageRef& image, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  const auto cx = [&](int v) { return std::clamp(v, 0, image.width - 1); };
  const auto cy = [&](int v) { return std::clamp(v, 0, image.height - 1); };
  const double v00 = image.at(cx(x0), cy(y0));
  const double v10 = image.at(cx(x0 + 1), cy(y0));
  const double v01 = image.at(cx(x0), cy(y0 + 1));
  const double v11 = image.at(cx(x0 + 1), cy(y0 + 1));
  return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) +
         fy * ((1.0 - fx) * v01 + fx * v11);
}

Patch sample_patch(const ImageRef& image, const Vec2& center, double scale,
                   int size) {
  if (!image.has_pixels())
    throw DataError(strformat(
        "image %d has no pixel data; use precomputed flows (--flows) instead "
        "of the correlation aligner",
        image.image_id));
  if (size < 1 || size % 2 == 0)
    throw std::invalid_argument("sample_patch: size must be odd");
  if (!(scale > 0.0))
    throw std::invalid_argument("sample_patch: scale must be positive");

  Patch p;
  p.center = center;
  p.scale = scale;
  p.size = size;
  p.samples.resize(static_cast<std::size_t>(size) * size);
  const double half = (size - 1) / 2.0;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double x = center.x() + scale * (c - half);
      const double y = center.y() + scale * (r - half);
      p.samples[static_cast<std::size_t>(r) * size + c] =
          sample_bilinear(image, x, y);
    }
  }
  return p;
}

DescriptorGrid dense_descriptors(const Patch& patch, int grid_size) {
  if (grid_size < 3 || grid_size % 2 == 0 || grid_size > patch.size)
    throw std::invalid_argument(
        "dense_descriptors: grid size must be odd, >= 3 and <= patch size");

  DescriptorGrid g;
  g.h = g.w = grid_size;
  g.dim = 9;
  g.data.resize(grid_size * grid_size, 9);
  const int stride = (patch.size - 1) / (grid_size - 1);
  const auto clampi = [&](int v) { return std::clamp(v, 0, patch.size - 1); };
  for (int i = 0; i < grid_size; ++i) {
    for (int j = 0; j < grid_size; ++j) {
      double d[9];
      double mean = 0.0;
      int idx = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const double v =
              patch.at(clampi(j * stride + dc), clampi(i * stride + dr));
          d[idx++] = v;
          mean += v;
        }
      }
      mean /= 9.0;
      double norm2 = 0.0;
      for (double& v : d) {
        v -= mean;
        norm2 += v * v;
      }
      const double norm = std::sqrt(norm2);
      Eigen::RowVectorXd row(9);
      for (int k = 0; k < 9; ++k) row(k) = norm > 0.0 ? d[k] / norm : 0.0;
      g.data.row(i * grid_size + j) = row;
    }
  }
  return g;
}

namespace {

// ReLU + channel L2 normalization of one cell's raw correlation vector,
// in place. All-zero channels are left as zeros.
void normalize_channel(Eigen::VectorXd& m) {
  double norm2 = 0.0;
  for (int k = 0; k < m.size(); ++k) {
    if (m(k) < 0.0) m(k) = 0.0;
    norm2 += m(k) * m(k);
  }
  if (norm2 > 0.0) m /= std::sqrt(norm2);
}

struct ChannelPeak {
  Vec2 flow_cells = Vec2::Zero();
  bool low_confidence = false;
};

// Peak of a normalized channel vector with per-axis quadratic refinement.
// Ties prefer the smallest displacement, then the smallest channel index.
ChannelPeak peak_from_channel(const Eigen::VectorXd& channel, int h, int w) {
  ChannelPeak out;
  const int ci = (h - 1) / 2;
  const int cj = (w - 1) / 2;
  int best = -1;
  double best_value = 0.0;
  long best_dist = 0;
  for (int k = 0; k < channel.size(); ++k) {
    const double v = channel(k);
    if (v <= 0.0) continue;
    const int i2 = k / w;
    const int j2 = k % w;
    const long dist = static_cast<long>(i2 - ci) * (i2 - ci) +
                      static_cast<long>(j2 - cj) * (j2 - cj);
    if (best < 0 || v > best_value ||
        (v == best_value && dist < best_dist)) {
      best = k;
      best_value = v;
      best_dist = dist;
    }
  }
  if (best < 0) {
    out.low_confidence = true;  // all-zero channel: textureless patch
    return out;
  }
  const int i2 = best / w;
  const int j2 = best % w;
  const auto subcell = [&](double vm, double v0, double vp) {
    const double denom = vm - 2.0 * v0 + vp;
    if (denom >= 0.0) return 0.0;  // not a proper local maximum
    return std::clamp(0.5 * (vm - vp) / denom, -0.5, 0.5);
  };
  double dx = 0.0, dy = 0.0;
  if (j2 > 0 && j2 < w - 1)
    dx = subcell(channel(best - 1), channel(best), channel(best + 1));
  if (i2 > 0 && i2 < h - 1)
    dy = subcell(channel(best - w), channel(best), channel(best + w));
  out.flow_cells = Vec2(j2 - cj + dx, i2 - ci + dy);
  return out;
}

// Channel vector of the central cell only; identical arithmetic to the
// corresponding row of correlate_normalize, skipping the other h*w-1 cells.
Eigen::VectorXd central_channel(const DescriptorGrid& a,
                                const DescriptorGrid& b) {
  const int center = ((a.h - 1) / 2) * a.w + (a.w - 1) / 2;
  Eigen::VectorXd m = b.data * a.data.row(center).transpose();
  normalize_channel(m);
  return m;
}

}  // namespace

CorrelationVolume correlate_normalize(const DescriptorGrid& a,
                                      const DescriptorGrid& b) {
  if (a.h != b.h || a.w != b.w || a.dim != b.dim)
    throw std::invalid_argument(
        "correlate_normalize: descriptor grid shapes differ");
  CorrelationVolume vol;
  vol.h = a.h;
  vol.w = a.w;
  vol.values.resize(a.h * a.w, a.h * a.w);
  for (int cell = 0; cell < a.h * a.w; ++cell) {
    Eigen::VectorXd m = b.data * a.data.row(cell).transpose();
    normalize_channel(m);
    vol.values.row(cell) = m.transpose();
  }
  return vol;
}

CentralFlow regress_central_flow(const CorrelationVolume& volume,
                                 double cell_size) {
  if (!(cell_size > 0.0))
    throw std::invalid_argument("regress_central_flow: cell_size <= 0");
  const int center = ((volume.h - 1) / 2) * volume.w + (volume.w - 1) / 2;
  const Eigen::VectorXd channel = volume.values.row(center).transpose();
  const ChannelPeak peak = peak_from_channel(channel, volume.h, volume.w);
  return {peak.flow_cells * cell_size, peak.low_confidence};
}

CentralFlow predict_central_flow(const ImageRef& image_u, const Vec2& u,
                                 const ImageRef& image_v, const Vec2& v,
                                 double scale, const AlignOptions& opt) {
  const Patch pu = sample_patch(image_u, u, scale, opt.patch_size);
  const Patch pv = sample_patch(image_v, v, scale, opt.patch_size);
  const DescriptorGrid fu = dense_descriptors(pu, opt.grid_size);
  const DescriptorGrid fv = dense_descriptors(pv, opt.grid_size);
  const Eigen::VectorXd channel = central_channel(fu, fv);
  const ChannelPeak peak = peak_from_channel(channel, opt.grid_size,
                                             opt.grid_size);
  const double stride = (opt.patch_size - 1) / double(opt.grid_size - 1);
  const double cell_size = stride * scale;
  return {peak.flow_cells * cell_size, peak.low_confidence};
}

FlowField estimate_flow_field(const ImageRef& image_u, const Vec2& u,
                              const ImageRef& image_v, const Vec2& v,
                              const AlignOptions& opt) {
  if (!(opt.spacing > 0.0))
    throw std::invalid_argument("estimate_flow_field: spacing <= 0");
  if (!(opt.fine_zoom >= 1.0))
    throw std::invalid_argument("estimate_flow_field: fine_zoom < 1");

  // Coarse alignment at extraction resolution, central pixel only.
  const CentralFlow coarse =
      predict_central_flow(image_u, u, image_v, v, 1.0, opt);

  FlowField field;
  field.spacing = opt.spacing;
  field.low_confidence = coarse.low_confidence;
  const double fine_scale = 1.0 / opt.fine_zoom;
  for (int gy = -1; gy <= 1; ++gy) {
    for (int gx = -1; gx <= 1; ++gx) {
      const Vec2 g(gx * opt.spacing, gy * opt.spacing);
      const CentralFlow fine = predict_central_flow(
          image_u, u + g, image_v, v + coarse.flow + g, fine_scale, opt);
      field.at(gx, gy) = coarse.flow + fine.flow;
      field.low_confidence |= fine.low_confidence;
    }
  }
  return field;
}

void annotate_graph_flows(MatchGraph& graph, const AlignOptions& opt,
                          int threads) {
  const int num_edges = static_cast<int>(graph.edges.size());
  parallel_for(num_edges, threads, [&](int e) {
    MatchEdge& edge = graph.edges[e];
    const Keypoint& from = graph.nodes[edge.from_node];
    const Keypoint& to = graph.nodes[edge.to_node];
    FlowField f =
        estimate_flow_field(graph.images[from.image_id], from.position,
                            graph.images[to.image_id], to.position, opt);
    f.from_node = edge.from_node;
    f.to_node = edge.to_node;
    edge.flow = f;
  });
}

double enforce_max_long_edge(ImageRef& image, int max_long_edge) {
  const int long_edge = std::max(image.width, image.height);
  if (max_long_edge <= 0 || long_edge <= max_long_edge || !image.has_pixels())
    return 1.0;
  const double factor = static_cast<double>(max_long_edge) / long_edge;
  const int nw = std::max(1, static_cast<int>(std::lround(image.width * factor)));
  const int nh = std::max(1, static_cast<int>(std::lround(image.height * factor)));
  // Area-average the source pixels covered by each destination pixel.
  std::vector<double> next(static_cast<std::size_t>(nw) * nh, 0.0);
  const double sx = static_cast<double>(image.width) / nw;
  const double sy = static_cast<double>(image.height) / nh;
  for (int y = 0; y < nh; ++y) {
    const int y0 = static_cast<int>(y * sy);
    const int y1 = std::min(image.height, std::max(y0 + 1, static_cast<int>((y + 1) * sy)));
    for (int x = 0; x < nw; ++x) {
      const int x0 = static_cast<int>(x * sx);
      const int x1 = std::min(image.width, std::max(x0 + 1, static_cast<int>((x + 1) * sx)));
      double acc = 0.0;
      for (int yy = y0; yy < y1; ++yy)
        for (int xx = x0; xx < x1; ++xx) acc += image.at(xx, yy);
      next[static_cast<std::size_t>(y) * nw + x] =
          acc / ((y1 - y0) * (x1 - x0));
    }
  }
  image.width = nw;
  image.height = nh;
  image.pixels = std::move(next);
  return factor;
}

}  // namespace kpref

#include "pmesh/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "pmesh/error.hpp"

namespace pmesh {

void validate(const HeatmapParams& p) {
  if (p.height <= 0 || p.width <= 0) throw ConfigError("heatmap resolution must be positive");
  if (!(p.stride > 0.0) || !std::isfinite(p.stride)) throw ConfigError("heatmap stride must be positive");
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) throw ConfigError("heatmap sigma must be positive");
}

HeatmapStack::HeatmapStack(int joints, int height, int width, double stride)
    : height_(height), width_(width), stride_(stride), values_(RowArrayXXd::Zero(joints, height * width)) {
  if (joints < 0 || height <= 0 || width <= 0 || !(stride > 0.0)) throw DimensionError("bad heatmap layout");
}

void validate(const HeatmapStack& h) {
  if (!h.values().allFinite()) throw InvariantError("heatmaps", "non-finite cell");
  if (h.values().size() > 0 && h.values().minCoeff() < 0.0) throw InvariantError("heatmaps", "negative cell");
}

void validate(const KeypointSet& k) {
  const auto n = k.coords.rows();
  if (k.confidence.size() != n || k.visible.size() != n) throw DimensionError("keypoint set: inconsistent sizes");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(k.confidence(i) >= 0.0 && k.confidence(i) <= 1.0))
      throw InvariantError("keypoints.confidence", "outside [0, 1] at joint " + std::to_string(i));
    if (k.visible(i) && !k.coords.row(i).allFinite())
      throw InvariantError("keypoints.coords", "non-finite visible joint " + std::to_string(i));
  }
}

HeatmapStack render(const KeypointSet& kps, const HeatmapParams& p) {
  if (!(p.sigma > 0.0)) throw ConfigError("heatmap sigma must be positive");
  validate(p);
  HeatmapStack h(kps.size(), p.height, p.width, p.stride);
  const double inv = 1.0 / (2.0 * p.sigma * p.sigma);
  Eigen::ArrayXd gx(p.width), gy(p.height);
  for (int j = 0; j < kps.size(); ++j) {
    if (!kps.visible(j)) continue;
    const double x = kps.coords(j, 0), y = kps.coords(j, 1);
    for (int c = 0; c < p.width; ++c) {
      const double d = cell_center(c, p.stride) - x;
      gx(c) = std::exp(-d * d * inv);
    }
    for (int r = 0; r < p.height; ++r) {
      const double d = cell_center(r, p.stride) - y;
      gy(r) = std::exp(-d * d * inv);
    }
    h.grid(j) = (gy.matrix() * gx.matrix().transpose()).array();
  }
  return h;
}

KeypointSet decode_argmax(const HeatmapStack& h) {
  KeypointSet k(h.joints());
  for (int j = 0; j < h.joints(); ++j) {
    const auto row = h.values().row(j);
    Eigen::Index best = 0;
    // maxCoeff returns the first maximum, which is the row-major tie-break.
    const double m = row.maxCoeff(&best);
    if (!(m > 0.0)) continue;
    const int r = static_cast<int>(best / h.width()), c = static_cast<int>(best % h.width());
    k.coords(j, 0) = cell_center(c, h.stride());
    k.coords(j, 1) = cell_center(r, h.stride());
    k.confidence(j) = std::clamp(m, 0.0, 1.0);
    k.visible(j) = true;
  }
  return k;
}

KeypointSet decode_soft_argmax(const HeatmapStack& h, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("soft-argmax temperature must be positive");
  KeypointSet k(h.joints());
  const double power = 1.0 / temperature;
  for (int j = 0; j < h.joints(); ++j) {
    const auto g = h.grid(j);
    const double m = g.maxCoeff();
    if (!(m > 0.0)) continue;
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (int r = 0; r < h.height(); ++r) {
      for (int c = 0; c < h.width(); ++c) {
        const double v = g(r, c);
        if (v <= 0.0) continue;
        const double w = std::exp(power * std::log(v / m));
        sw += w;
        sx += w * cell_center(c, h.stride());
        sy += w * cell_center(r, h.stride());
      }
    }
    k.coords(j, 0) = sx / sw;
    k.coords(j, 1) = sy / sw;
    k.confidence(j) = std::clamp(m, 0.0, 1.0);
    k.visible(j) = true;
  }
  return k;
}

}  // namespace pmesh

// Registration quality metrics: DICE overlap and mean target registration
// error on landmark correspondences.
#pragma once

#include "gradicon/synthdata.hpp"

namespace gradicon {

// 2|A n B| / (|A| + |B|) on binary masks; empty-vs-empty is 1 by convention.
inline double dice(const Tensor& a, const Tensor& b) {
  if (!same_shape(a, b)) throw std::invalid_argument("dice: shape mismatch");
  long na = 0, nb = 0, ninter = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const bool ai = a.data[i] > 0.5, bi = b.data[i] > 0.5;
    na += ai;
    nb += bi;
    ninter += ai && bi;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * ninter / static_cast<double>(na + nb);
}

// Nearest-neighbor resampling of a binary mask through a map: keeps values
// in {0,1}, which bilinear sampling would not.
inline Tensor warp_mask_nearest(const Tensor& mask, const TransformMap& map) {
  const int H = mask.shape[1], W = mask.shape[2];
  Tensor pts = map.eval(pixel_center_grid(H, W));
  Tensor out({1, H, W});
  const long N = static_cast<long>(H) * W;
  for (long n = 0; n < N; ++n) {
    const double y = std::clamp(pts.data[n], 0.0, 1.0);
    const double x = std::clamp(pts.data[N + n], 0.0, 1.0);
    const int i = std::clamp(static_cast<int>(std::floor(y * H)), 0, H - 1);
    const int j = std::clamp(static_cast<int>(std::floor(x * W)), 0, W - 1);
    out.data[n] = mask.data[static_cast<long>(i) * W + j];
  }
  return out;
}

struct MtreResult {
  double normalized = 0.0;
  double pixels = 0.0;  // normalized * min extent of the reporting grid
};

// Mean over landmark pairs of |map(point_B) - point_A|: the map warps
// target-frame points into the source frame (source o map ~ target).
inline MtreResult mtre(const LandmarkSet& lm, const TransformMap& map, int grid_extent) {
  if (lm.pairs.empty()) throw std::invalid_argument("mtre: empty landmark set");
  Tensor pts({2, static_cast<int>(lm.pairs.size())});
  const long N = lm.pairs.size();
  for (long i = 0; i < N; ++i) {
    pts.data[i] = lm.pairs[i][2];
    pts.data[N + i] = lm.pairs[i][3];
  }
  Tensor mapped = map.eval(pts);
  double acc = 0.0;
  for (long i = 0; i < N; ++i) {
    const double dy = mapped.data[i] - lm.pairs[i][0];
    const double dx = mapped.data[N + i] - lm.pairs[i][1];
    acc += std::sqrt(dy * dy + dx * dx);
  }
  MtreResult r;
  r.normalized = acc / N;
  r.pixels = r.normalized * grid_extent;
  return r;
}

}  // namespace gradicon

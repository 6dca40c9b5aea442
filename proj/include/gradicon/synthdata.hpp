// Synthetic datasets: hollow triangle/circle renderings, elastic-deform
// registration pairs with known truth warps, and dependency-free file I/O
// (16-bit PGM, landmark CSV).
#pragma once

#include "gradicon/geometry.hpp"

namespace gradicon {

struct ShapeSpec {
  enum class Kind { Triangle, Circle };
  Kind kind = Kind::Circle;
  double center_y = 0.5, center_x = 0.5;  // in [0.3, 0.7]
  double radius = 0.25;                   // in [0.15, 0.35]
  double stroke_px = 2.0;                 // hollow edge width in pixels
  double rotation = 0.0;
};

namespace detail {

// Signed distance (negative inside) in normalized units.
inline double shape_sdf(const ShapeSpec& s, double y, double x) {
  const double dy = y - s.center_y, dx = x - s.center_x;
  if (s.kind == ShapeSpec::Kind::Circle)
    return std::sqrt(dy * dy + dx * dx) - s.radius;
  // Equilateral triangle: vertices at radius r, angles rotation + k*120deg.
  std::array<std::pair<double, double>, 3> v;
  for (int k = 0; k < 3; ++k) {
    const double a = s.rotation + 2.0 * M_PI * k / 3.0 - M_PI / 2.0;
    v[k] = {s.center_y + s.radius * std::sin(a), s.center_x + s.radius * std::cos(a)};
  }
  double dmin = 1e9;
  int winding = 0;
  for (int k = 0; k < 3; ++k) {
    const auto [ay, ax] = v[k];
    const auto [by, bx] = v[(k + 1) % 3];
    const double ey = by - ay, ex = bx - ax;
    const double wy = y - ay, wx = x - ax;
    const double t = std::clamp((wy * ey + wx * ex) / (ey * ey + ex * ex), 0.0, 1.0);
    const double py = wy - t * ey, px = wx - t * ex;
    dmin = std::min(dmin, std::sqrt(py * py + px * px));
    // even-odd ray cast along +x
    if ((ay > y) != (by > y)) {
      const double xi = ax + (y - ay) / (by - ay) * (bx - ax);
      if (x < xi) winding ^= 1;
    }
  }
  return winding ? -dmin : dmin;
}

}  // namespace detail

// Anti-aliased hollow edge rendering plus the filled interior mask.
struct ShapeSample {
  Tensor image;  // (1,size,size), edge intensity in [0,1]
  Tensor mask;   // (1,size,size), values in {0,1}
  ShapeSpec spec;
};

inline ShapeSample render_shape(const ShapeSpec& spec, int size) {
  ShapeSample out;
  out.spec = spec;
  out.image = Tensor({1, size, size});
  out.mask = Tensor({1, size, size});
  const double half = 0.5 * spec.stroke_px;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const double y = (i + 0.5) / size, x = (j + 0.5) / size;
      const double d_px = detail::shape_sdf(spec, y, x) * size;
      // 1 on the edge band, 1-pixel linear anti-aliasing ramp outside it.
      out.image.data[static_cast<long>(i) * size + j] =
          std::clamp(half + 0.5 - std::abs(d_px), 0.0, 1.0);
      out.mask.data[static_cast<long>(i) * size + j] = d_px <= 0.0 ? 1.0 : 0.0;
    }
  return out;
}

inline std::vector<ShapeSample> gen_shapes(int n, int size, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_shapes: n must be >= 1");
  std::vector<ShapeSample> out;
  out.reserve(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> center(0.3, 0.7);
  std::uniform_real_distribution<double> radius(0.15, 0.35);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int k = 0; k < n; ++k) {
    ShapeSpec spec;
    spec.kind = coin(rng) ? ShapeSpec::Kind::Triangle : ShapeSpec::Kind::Circle;
    spec.center_y = center(rng);
    spec.center_x = center(rng);
    spec.radius = radius(rng);
    spec.rotation = angle(rng);
    // keep the shape inside the domain with margin >= 0.05
    const double max_r = std::min({spec.center_y, spec.center_x, 1.0 - spec.center_y,
                                   1.0 - spec.center_x}) -
                         0.05;
    spec.radius = std::min(spec.radius, max_r);
    out.push_back(render_shape(spec, size));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elastic-deform pairs from a binary mask with retained truth warp.
// ---------------------------------------------------------------------------

struct ElasticWarpSpec {
  int control_grid = 5;       // n x n control points spanning the domain
  double displacement_std = 0.03;  // normalized units
  int max_resamples = 20;
};

struct LandmarkSet {
  // (point_A, point_B) correspondences; A = source frame, B = target frame.
  std::vector<std::array<double, 4>> pairs;  // yA,xA,yB,xB
};

struct ElasticPair {
  Tensor source, target;  // (1,H,W)
  TransformMap truth = TransformMap::identity();  // target = source o truth
  LandmarkSet landmarks;
};

// Coarse Gaussian control-grid displacement upsampled multilinearly to the
// full grid. Rejects folded draws; throws if none of max_resamples is
// fold-free.
inline TransformMap random_elastic_warp(int H, int W, const ElasticWarpSpec& spec,
                                        std::mt19937_64& rng) {
  const int n = spec.control_grid;
  for (int attempt = 0; attempt < spec.max_resamples; ++attempt) {
    Tensor coarse = spec.displacement_std > 0.0
                        ? random_normal({2, n, n}, rng, 0.0, spec.displacement_std)
                        : Tensor({2, n, n});
    // Multilinear upsample: sample the coarse field (as a pixel-center grid
    // of its own) at the fine pixel centers.
    Var fine = grid_sample(constant(coarse), constant(pixel_center_grid(H, W)));
    TransformMap warp = TransformMap::field(reshape(fine, {2, H, W}));
    if (fold_fraction(warp, H, W).fraction_negative == 0.0) return warp;
  }
  throw std::runtime_error("random_elastic_warp: no fold-free warp found");
}

inline std::vector<ElasticPair> gen_elastic_pairs(const Tensor& mask, int pairs_per_image,
                                                  const ElasticWarpSpec& spec,
                                                  uint64_t seed, int landmarks_k = 100) {
  if (mask.shape.size() != 3 || mask.shape[0] != 1)
    throw std::invalid_argument("gen_elastic_pairs: mask must be (1,H,W)");
  const int H = mask.shape[1], W = mask.shape[2];
  std::vector<ElasticPair> out;
  std::mt19937_64 rng(seed);
  for (int p = 0; p < pairs_per_image; ++p) {
    ElasticPair pair;
    pair.source = mask;
    pair.truth = random_elastic_warp(H, W, spec, rng);
    pair.target = resample_image(make_image(mask), pair.truth).grid->value;
    // Landmarks: a regular sub-grid of target-frame points with their true
    // source-frame correspondences point_A = truth(point_B).
    const int side = std::max(1, static_cast<int>(std::round(std::sqrt(landmarks_k))));
    Tensor pts({2, side * side});
    long idx = 0;
    for (int i = 0; i < side; ++i)
      for (int j = 0; j < side; ++j) {
        pts.data[idx] = (i + 0.5) / side;
        pts.data[static_cast<long>(side) * side + idx] = (j + 0.5) / side;
        ++idx;
      }
    Tensor mapped = pair.truth.eval(pts);
    const long N = side * static_cast<long>(side);
    for (long i = 0; i < N; ++i)
      pair.landmarks.pairs.push_back(
          {mapped.data[i], mapped.data[N + i], pts.data[i], pts.data[N + i]});
    out.push_back(std::move(pair));
  }
  return out;
}

// ---------------------------------------------------------------------------
// File I/O: 16-bit binary PGM (P5), landmark CSV.
// ---------------------------------------------------------------------------

inline void save_pgm(const std::string& path, const Tensor& img) {
  if (img.shape.size() != 3 || img.shape[0] != 1)
    throw std::invalid_argument("save_pgm: expects (1,H,W)");
  const int H = img.shape[1], W = img.shape[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_pgm: cannot open " + path);
  f << "P5\n" << W << " " << H << "\n65535\n";
  for (double v : img.data) {
    const int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    const unsigned char hi = static_cast<unsigned char>(q >> 8);
    const unsigned char lo = static_cast<unsigned char>(q & 0xff);
    f.put(static_cast<char>(hi));
    f.put(static_cast<char>(lo));
  }
}

inline Tensor load_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_pgm: cannot open " + path);
  std::string magic;
  int W = 0, H = 0, maxval = 0;
  f >> magic >> W >> H >> maxval;
  if (magic != "P5" || W <= 0 || H <= 0 || maxval != 65535)
    throw std::runtime_error("load_pgm: malformed header in " + path);
  f.get();  // single whitespace after maxval
  Tensor img({1, H, W});
  for (double& v : img.data) {
    const int hi = f.get(), lo = f.get();
    if (hi < 0 || lo < 0) throw std::runtime_error("load_pgm: short file " + path);
    v = ((hi << 8) | lo) / 65535.0;
  }
  return img;
}

inline void save_landmarks_csv(const std::string& path, const LandmarkSet& lm) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_landmarks_csv: cannot open " + path);
  f << "yA,xA,yB,xB\n" << std::setprecision(17);
  for (const auto& p : lm.pairs) f << p[0] << ',' << p[1] << ',' << p[2] << ',' << p[3] << '\n';
}

inline LandmarkSet load_landmarks_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_landmarks_csv: cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (line != "yA,xA,yB,xB")
    throw std::runtime_error("load_landmarks_csv: malformed header in " + path);
  LandmarkSet lm;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::array<double, 4> p{};
    char c;
    std::istringstream ss(line);
    if (!(ss >> p[0] >> c >> p[1] >> c >> p[2] >> c >> p[3]))
      throw std::runtime_error("load_landmarks_csv: malformed row in " + path);
    lm.pairs.push_back(p);
  }
  return lm;
}

}  // namespace gradicon

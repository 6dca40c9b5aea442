// Transform maps over the unit domain, backed by displacement fields.
//
// A field map evaluates as phi(x) = x + interp(D, clip(x, [0,1]^2)).
// Composition is lazy: no field is ever resampled implicitly, so gradients
// flow exactly through every constituent map.
#pragma once

#include <array>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "gradicon/autodiff.hpp"

namespace gradicon {

struct Image {
  Var grid;  // (1,H,W), intensities in [0,1]
  int height() const { return grid->value.shape[1]; }
  int width() const { return grid->value.shape[2]; }
};

inline Image make_image(Tensor t) {
  if (t.shape.size() == 2) t.shape = {1, t.shape[0], t.shape[1]};
  if (t.shape.size() != 3 || t.shape[0] != 1)
    throw std::invalid_argument("make_image: expects (1,H,W) or (H,W)");
  return Image{constant(std::move(t))};
}

class TransformMap {
 public:
  enum class Kind { Identity, Field, Composed, Affine };

  static TransformMap identity() { return TransformMap(Kind::Identity); }

  static TransformMap field(Var displacement) {
    const auto& s = displacement->value.shape;
    if (s.size() != 3 || s[0] != 2)
      throw std::invalid_argument("TransformMap::field: expects (2,H,W)");
    TransformMap m(Kind::Field);
    m.field_ = std::move(displacement);
    return m;
  }

  // Row-major 2x3 matrix [A | b] acting on (y,x) homogeneous coordinates.
  static TransformMap affine(std::array<double, 6> m23) {
    TransformMap m(Kind::Affine);
    m.affine_ = m23;
    return m;
  }

  Kind kind() const { return kind_; }
  const Var& displacement() const { return field_; }
  const std::array<double, 6>& matrix() const { return affine_; }
  const TransformMap& outer() const { return *outer_; }
  const TransformMap& inner() const { return *inner_; }

  // Evaluates at points (2,N); differentiable through fields and points.
  Var operator()(const Var& points) const {
    switch (kind_) {
      case Kind::Identity:
        return points;
      case Kind::Field:
        return add(points, grid_sample(field_, points));
      case Kind::Composed:
        return (*outer_)((*inner_)(points));
      case Kind::Affine: {
        const long N = points->value.shape[1];
        Tensor out({2, static_cast<int>(N)});
        const double* p = points->value.data.data();
        const auto& A = affine_;
        for (long n = 0; n < N; ++n) {
          out.data[n] = A[0] * p[n] + A[1] * p[N + n] + A[2];
          out.data[N + n] = A[3] * p[n] + A[4] * p[N + n] + A[5];
        }
        return detail::make_node(std::move(out), {points}, [A, N](Node& self) {
          Node& pp = *self.parents[0];
          for (long n = 0; n < N; ++n) {
            pp.grad.data[n] += A[0] * self.grad.data[n] + A[3] * self.grad.data[N + n];
            pp.grad.data[N + n] += A[1] * self.grad.data[n] + A[4] * self.grad.data[N + n];
          }
        });
      }
    }
    throw std::logic_error("unreachable");
  }

  Tensor eval(const Tensor& points) const { return (*this)(constant(points))->value; }

  friend TransformMap compose(TransformMap outer, TransformMap inner);

 private:
  explicit TransformMap(Kind k) : kind_(k) {}
  Kind kind_;
  Var field_;
  std::array<double, 6> affine_{};
  std::shared_ptr<TransformMap> outer_, inner_;
};

// result(x) = outer(inner(x)); no resampling, evaluation stays exact.
inline TransformMap compose(TransformMap outer, TransformMap inner) {
  if (outer.kind_ == TransformMap::Kind::Identity) return inner;
  if (inner.kind_ == TransformMap::Kind::Identity) return outer;
  TransformMap m(TransformMap::Kind::Composed);
  m.outer_ = std::make_shared<TransformMap>(std::move(outer));
  m.inner_ = std::make_shared<TransformMap>(std::move(inner));
  return m;
}

// Pixel-center sample grid of the unit domain as a (2, H*W) point tensor.
inline Tensor pixel_center_grid(int H, int W) {
  Tensor pts({2, H * W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      pts.data[static_cast<long>(i) * W + j] = (i + 0.5) / H;
      pts.data[static_cast<long>(H) * W + static_cast<long>(i) * W + j] = (j + 0.5) / W;
    }
  return pts;
}

struct JacobianProbe {
  double dx = 1e-3;  // one-sided forward step
};

// One-sided FD Jacobian at each point: column j = (phi(x+dx e_j)-phi(x))/dx.
// Output (4,N) holds [J00 J01 J10 J11] per point; differentiable.
inline Var jacobian_fd(const TransformMap& map, const Var& points,
                       const JacobianProbe& probe = {}) {
  if (probe.dx <= 0.0) throw std::invalid_argument("jacobian_fd: dx must be > 0");
  const long N = points->value.shape[1];
  auto shifted = [&](int axis) {
    Tensor d({2, static_cast<int>(N)});
    for (long n = 0; n < N; ++n) d.data[axis * N + n] = probe.dx;
    return add(points, constant(std::move(d)));
  };
  Var base = map(points);
  Var dy = scale(sub(map(shifted(0)), base), 1.0 / probe.dx);  // columns d/dx0
  Var dx = scale(sub(map(shifted(1)), base), 1.0 / probe.dx);  // columns d/dx1
  // Interleave into (4,N): row-major 2x2 per point.
  Var cat = concat_channels(reshape(dy, {2, 1, static_cast<int>(N)}),
                            reshape(dx, {2, 1, static_cast<int>(N)}));
  // cat rows: [dphi0/d0, dphi1/d0, dphi0/d1, dphi1/d1] -> reorder to J row-major.
  Tensor out({4, static_cast<int>(N)});
  const double* c = cat->value.data.data();
  for (long n = 0; n < N; ++n) {
    out.data[0 * N + n] = c[0 * N + n];  // J00 = dphi0/d0
    out.data[1 * N + n] = c[2 * N + n];  // J01 = dphi0/d1
    out.data[2 * N + n] = c[1 * N + n];  // J10 = dphi1/d0
    out.data[3 * N + n] = c[3 * N + n];  // J11 = dphi1/d1
  }
  return detail::make_node(std::move(out), {cat}, [N](Node& self) {
    Node& p = *self.parents[0];
    for (long n = 0; n < N; ++n) {
      p.grad.data[0 * N + n] += self.grad.data[0 * N + n];
      p.grad.data[2 * N + n] += self.grad.data[1 * N + n];
      p.grad.data[1 * N + n] += self.grad.data[2 * N + n];
      p.grad.data[3 * N + n] += self.grad.data[3 * N + n];
    }
  });
}

struct FoldReport {
  double fraction_negative = 0.0;
  int grid_h = 0, grid_w = 0;
  double sample_margin = 0.0;
  long evaluated = 0;
};

// Fraction of grid points (inside the margin) where det of the FD Jacobian
// is <= 0. The margin keeps probes away from the clip boundary where the
// determinant is meaningless. Default margin: two pixels of normalized span.
inline FoldReport fold_fraction(const TransformMap& map, int H, int W,
                                double margin = -1.0, const JacobianProbe& probe = {}) {
  if (margin < 0.0) margin = 2.0 / std::min(H, W);
  if (margin < probe.dx)
    throw std::invalid_argument("fold_fraction: margin must cover the FD step");
  std::vector<double> ys, xs;
  for (int i = 0; i < H; ++i) {
    const double y = (i + 0.5) / H;
    if (y >= margin && y <= 1.0 - margin) ys.push_back(y);
  }
  for (int j = 0; j < W; ++j) {
    const double x = (j + 0.5) / W;
    if (x >= margin && x <= 1.0 - margin) xs.push_back(x);
  }
  if (ys.empty() || xs.empty())
    throw std::invalid_argument("fold_fraction: empty interior after margin");
  const long N = static_cast<long>(ys.size()) * xs.size();
  Tensor pts({2, static_cast<int>(N)});
  long n = 0;
  for (double y : ys)
    for (double x : xs) {
      pts.data[n] = y;
      pts.data[N + n] = x;
      ++n;
    }
  Tensor J = jacobian_fd(map, constant(std::move(pts)), probe)->value;
  long folded = 0;
  for (long i = 0; i < N; ++i) {
    const double det = J.data[i] * J.data[3 * N + i] - J.data[N + i] * J.data[2 * N + i];
    if (det <= 0.0) ++folded;
  }
  FoldReport r;
  r.fraction_negative = static_cast<double>(folded) / N;
  r.grid_h = H;
  r.grid_w = W;
  r.sample_margin = margin;
  r.evaluated = N;
  return r;
}

// output(x) = I(map(x)) on the pixel-center grid; differentiable through map.
inline Image resample_image(const Image& img, const TransformMap& map) {
  const int H = img.height(), W = img.width();
  Var warped_pts = map(constant(pixel_center_grid(H, W)));
  Var sampled = grid_sample(img.grid, warped_pts);
  return Image{reshape(sampled, {1, H, W})};
}

// Displacement of an arbitrary map sampled on the pixel-center grid,
// as a (2,H,W) node: map(x) - x. This is the explicit "export to a single
// field" step; the result stays differentiable through the source map.
inline Var export_displacement(const TransformMap& map, int H, int W) {
  Var pts = constant(pixel_center_grid(H, W));
  Var disp = sub(map(pts), pts);
  return reshape(disp, {2, H, W});
}

// ---------------------------------------------------------------------------
// Field file formats: CSV and raw little-endian float64 with 16-byte header.
// ---------------------------------------------------------------------------

inline void save_field_csv(const std::string& path, const Tensor& field) {
  if (field.shape.size() != 3 || field.shape[0] != 2)
    throw std::invalid_argument("save_field_csv: expects (2,H,W)");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_field_csv: cannot open " + path);
  f << "2," << field.shape[1] << "," << field.shape[2] << "\n";
  f << std::setprecision(17);
  for (size_t i = 0; i < field.data.size(); ++i)
    f << field.data[i] << (i + 1 == field.data.size() ? "\n" : ",");
}

inline Tensor load_field_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_field_csv: cannot open " + path);
  std::string header;
  std::getline(f, header);
  int d = 0, H = 0, W = 0;
  char c1, c2;
  std::istringstream hs(header);
  if (!(hs >> d >> c1 >> H >> c2 >> W) || d != 2 || H <= 0 || W <= 0)
    throw std::runtime_error("load_field_csv: malformed header in " + path);
  Tensor t({2, H, W});
  for (size_t i = 0; i < t.data.size(); ++i) {
    char sep;
    if (!(f >> t.data[i])) throw std::runtime_error("load_field_csv: short file " + path);
    f >> sep;
  }
  return t;
}

constexpr uint32_t kFieldMagic = 0x444c4647;  // "GFLD" little-endian

inline void save_field_raw(const std::string& path, const Tensor& field) {
  if (field.shape.size() != 3 || field.shape[0] != 2)
    throw std::invalid_argument("save_field_raw: expects (2,H,W)");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_field_raw: cannot open " + path);
  uint32_t header[4] = {kFieldMagic, 2u, static_cast<uint32_t>(field.shape[1]),
                        static_cast<uint32_t>(field.shape[2])};
  f.write(reinterpret_cast<const char*>(header), 16);
  f.write(reinterpret_cast<const char*>(field.data.data()),
          static_cast<std::streamsize>(field.data.size() * sizeof(double)));
}

inline Tensor load_field_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_field_raw: cannot open " + path);
  uint32_t header[4];
  f.read(reinterpret_cast<char*>(header), 16);
  if (!f || header[0] != kFieldMagic)
    throw std::runtime_error("load_field_raw: bad magic in " + path);
  if (header[1] != 2) throw std::runtime_error("load_field_raw: unsupported dimension");
  Tensor t({2, static_cast<int>(header[2]), static_cast<int>(header[3])});
  f.read(reinterpret_cast<char*>(t.data.data()),
         static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  if (!f) throw std::runtime_error("load_field_raw: short file " + path);
  return t;
}

}  // namespace gradicon

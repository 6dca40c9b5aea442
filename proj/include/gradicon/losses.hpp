// Similarity measures and regularizers; assembly of the total training loss.
#pragma once

#include "gradicon/geometry.hpp"

namespace gradicon {

struct SimilarityConfig {
  enum class Kind { MSE, LNCC };
  Kind kind = Kind::LNCC;
  double lncc_sigma = 5.0;  // voxels
  double lncc_eps = 1e-5;
};

struct RegularizerConfig {
  enum class Kind { ICON, GradICON, BendingEnergy, Diffusion };
  Kind kind = Kind::GradICON;
  double lambda = 1.5;
  double dx = 1e-3;  // FD step for the Jacobian of the composed map
};

struct LossReport {
  double sim_ab = 0.0;
  double sim_ba = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

inline Var mse(const Image& a, const Image& b) {
  if (!same_shape(a.grid->value, b.grid->value))
    throw std::invalid_argument("mse: shape mismatch");
  return mean(square(sub(a.grid, b.grid)));
}

namespace detail {

// Truncated (3 sigma) normalized Gaussian taps.
inline Tensor gaussian_taps(double sigma, bool vertical) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  const int K = 2 * r + 1;
  Tensor k(vertical ? std::vector<int>{1, 1, K, 1} : std::vector<int>{1, 1, 1, K});
  double s = 0.0;
  for (int i = 0; i < K; ++i) {
    const double d = i - r;
    k.data[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    s += k.data[i];
  }
  for (double& v : k.data) v /= s;
  return k;
}

inline Var smooth(const Var& img, const Var& kv, const Var& kh, int r) {
  return conv2d_hw(conv2d_hw(img, kv, nullptr, 1, r, 0), kh, nullptr, 1, 0, r);
}

}  // namespace detail

// Local normalized cross-correlation with Gaussian windows (truncated at
// 3 sigma, renormalized at the image boundary so every window's weights sum
// to one). Zero-variance windows contribute 0. Returns the mean per-pixel
// correlation; the dissimilarity used in losses is 1 - lncc.
inline Var lncc(const Image& a, const Image& b, const SimilarityConfig& cfg = {}) {
  if (!same_shape(a.grid->value, b.grid->value))
    throw std::invalid_argument("lncc: shape mismatch");
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * cfg.lncc_sigma)));
  Var kv = constant(detail::gaussian_taps(cfg.lncc_sigma, true));
  Var kh = constant(detail::gaussian_taps(cfg.lncc_sigma, false));
  // Boundary renormalization: window mass of the zero-padded kernel.
  Var ones = constant(Tensor(a.grid->value.shape, 1.0));
  Var mass = detail::smooth(ones, kv, kh, r);

  auto wmean = [&](const Var& x) { return div(detail::smooth(x, kv, kh, r), mass); };
  Var mu_a = wmean(a.grid);
  Var mu_b = wmean(b.grid);
  Var var_a = clipval(sub(wmean(square(a.grid)), square(mu_a)), 0.0, 1e100);
  Var var_b = clipval(sub(wmean(square(b.grid)), square(mu_b)), 0.0, 1e100);
  Var cov = sub(wmean(mul(a.grid, b.grid)), mul(mu_a, mu_b));
  Var denom = sqrt(add_scalar(mul(var_a, var_b), cfg.lncc_eps * cfg.lncc_eps));
  return mean(div(cov, denom));
}

inline Var similarity_dissim(const Image& warped, const Image& target,
                             const SimilarityConfig& cfg) {
  if (cfg.kind == SimilarityConfig::Kind::MSE) return mse(warped, target);
  return sub(constant_scalar(1.0), lncc(warped, target, cfg));
}

// Uniform sample points over the domain shrunk by `margin` per axis,
// deterministic in the seed. count defaults to voxels / 2^d at the call site.
inline Tensor sample_points(long count, uint64_t seed, double margin = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(margin, 1.0 - margin);
  Tensor pts({2, static_cast<int>(count)});
  for (double& v : pts.data) v = dist(rng);
  return pts;
}

// Mean over samples of |phi_ab(phi_ba(x)) - x|^2.
inline Var icon_reg(const TransformMap& phi_ab, const TransformMap& phi_ba,
                    const Var& points) {
  Var composed = phi_ab(phi_ba(points));
  Var diff = sub(composed, points);
  const long N = points->value.shape[1];
  return scale(sum(square(diff)), 1.0 / N);
}

// Mean over samples of |J_fd[phi_ab o phi_ba](x) - I|_F^2 with one-sided FD.
inline Var gradicon_reg(const TransformMap& phi_ab, const TransformMap& phi_ba,
                        const Var& points, double dx = 1e-3) {
  TransformMap composed = compose(phi_ab, phi_ba);
  Var J = jacobian_fd(composed, points, JacobianProbe{dx});
  const long N = points->value.shape[1];
  Tensor eye({4, static_cast<int>(N)});
  for (long n = 0; n < N; ++n) {
    eye.data[n] = 1.0;
    eye.data[3 * N + n] = 1.0;
  }
  Var diff = sub(J, constant(std::move(eye)));
  return scale(sum(square(diff)), 1.0 / N);
}

namespace detail {

// Central-difference first derivatives of a (2,H,W) displacement over the
// 1-pixel interior, with grid spacing 1/H resp. 1/W. Returns (8,...) stacked
// derivative channels flattened into one node for norm-taking.
inline Var displacement_gradients(const Var& D) {
  const auto& s = D->value.shape;
  const int H = s[1], W = s[2];
  if (H < 3 || W < 3) throw std::invalid_argument("displacement gradients: grid too small");
  const int Hi = H - 2, Wi = W - 2;
  Tensor out({4, Hi, Wi});
  const double* d = D->value.data.data();
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < Hi; ++y)
      for (int x = 0; x < Wi; ++x) {
        const long base = (static_cast<long>(c) * H + y + 1) * W + x + 1;
        out.data[(static_cast<long>(2 * c) * Hi + y) * Wi + x] =
            (d[base + W] - d[base - W]) * 0.5 * H;
        out.data[((static_cast<long>(2 * c) + 1) * Hi + y) * Wi + x] =
            (d[base + 1] - d[base - 1]) * 0.5 * W;
      }
  return make_node(std::move(out), {D}, [H, W, Hi, Wi](Node& self) {
    Node& p = *self.parents[0];
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < Hi; ++y)
        for (int x = 0; x < Wi; ++x) {
          const long base = (static_cast<long>(c) * H + y + 1) * W + x + 1;
          const double gy = self.grad.data[(static_cast<long>(2 * c) * Hi + y) * Wi + x];
          const double gx = self.grad.data[((static_cast<long>(2 * c) + 1) * Hi + y) * Wi + x];
          p.grad.data[base + W] += gy * 0.5 * H;
          p.grad.data[base - W] -= gy * 0.5 * H;
          p.grad.data[base + 1] += gx * 0.5 * W;
          p.grad.data[base - 1] -= gx * 0.5 * W;
        }
  });
}

// Central-difference second derivatives (yy, xx, and symmetric mixed) of a
// (2,H,W) displacement over the 1-pixel interior.
inline Var displacement_hessians(const Var& D) {
  const auto& s = D->value.shape;
  const int H = s[1], W = s[2];
  if (H < 3 || W < 3) throw std::invalid_argument("bending energy: grid too small");
  const int Hi = H - 2, Wi = W - 2;
  Tensor out({6, Hi, Wi});
  const double* d = D->value.data.data();
  const double hy2 = static_cast<double>(H) * H, hx2 = static_cast<double>(W) * W;
  const double hyx = static_cast<double>(H) * W;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < Hi; ++y)
      for (int x = 0; x < Wi; ++x) {
        const long base = (static_cast<long>(c) * H + y + 1) * W + x + 1;
        const long o = (static_cast<long>(3 * c) * Hi + y) * Wi + x;
        out.data[o] = (d[base + W] - 2.0 * d[base] + d[base - W]) * hy2;
        out.data[o + static_cast<long>(Hi) * Wi] =
            (d[base + 1] - 2.0 * d[base] + d[base - 1]) * hx2;
        out.data[o + 2L * Hi * Wi] =
            (d[base + W + 1] - d[base + W - 1] - d[base - W + 1] + d[base - W - 1]) *
            0.25 * hyx;
      }
  return make_node(std::move(out), {D}, [H, W, Hi, Wi, hy2, hx2, hyx](Node& self) {
    Node& p = *self.parents[0];
    for (int c = 0; c < 2; ++c)
      for (int y = 0; y < Hi; ++y)
        for (int x = 0; x < Wi; ++x) {
          const long base = (static_cast<long>(c) * H + y + 1) * W + x + 1;
          const long o = (static_cast<long>(3 * c) * Hi + y) * Wi + x;
          const double gyy = self.grad.data[o] * hy2;
          const double gxx = self.grad.data[o + static_cast<long>(Hi) * Wi] * hx2;
          const double gyx = self.grad.data[o + 2L * Hi * Wi] * 0.25 * hyx;
          p.grad.data[base + W] += gyy;
          p.grad.data[base] -= 2.0 * gyy;
          p.grad.data[base - W] += gyy;
          p.grad.data[base + 1] += gxx;
          p.grad.data[base] -= 2.0 * gxx;
          p.grad.data[base - 1] += gxx;
          p.grad.data[base + W + 1] += gyx;
          p.grad.data[base + W - 1] -= gyx;
          p.grad.data[base - W + 1] -= gyx;
          p.grad.data[base - W - 1] += gyx;
        }
  });
}

}  // namespace detail

// Mean over interior pixels of |grad D|_F^2 for a (2,H,W) displacement node.
inline Var diffusion_reg(const Var& displacement) {
  Var g = detail::displacement_gradients(displacement);
  const auto& s = g->value.shape;
  return scale(sum(square(g)), 1.0 / (static_cast<long>(s[1]) * s[2]));
}

// Mean over interior pixels of sum_i |hess D_i|_F^2 (mixed terms counted
// twice, matching the full Frobenius norm of the Hessian).
inline Var bending_energy_reg(const Var& displacement) {
  Var h = detail::displacement_hessians(displacement);
  const auto& s = h->value.shape;
  const int Hi = s[1], Wi = s[2];
  const long Ni = static_cast<long>(Hi) * Wi;
  // channels per component: yy, xx, yx -> weights 1,1,2
  Var sq = square(h);
  Tensor w({6, Hi, Wi});
  for (int c = 0; c < 6; ++c)
    std::fill(w.data.begin() + static_cast<long>(c) * Ni,
              w.data.begin() + static_cast<long>(c + 1) * Ni, (c % 3 == 2) ? 2.0 : 1.0);
  return scale(sum(mul(sq, constant(std::move(w)))), 1.0 / Ni);
}

struct TotalLoss {
  Var node;
  LossReport report;
};

// L = sim(I^A o Phi[A,B], I^B) + sim(I^B o Phi[B,A], I^A) + lambda * reg.
// ICON/GradICON use the composed pair at the given sample points; bending
// and diffusion average the penalty of both directions' grid displacements
// so the total is symmetric under swapping the pair.
inline TotalLoss total_loss(const Image& ia, const Image& ib,
                            const TransformMap& phi_ab, const TransformMap& phi_ba,
                            const SimilarityConfig& sim_cfg,
                            const RegularizerConfig& reg_cfg, const Var& points) {
  Var sim_ab = similarity_dissim(resample_image(ia, phi_ab), ib, sim_cfg);
  Var sim_ba = similarity_dissim(resample_image(ib, phi_ba), ia, sim_cfg);
  Var reg;
  switch (reg_cfg.kind) {
    case RegularizerConfig::Kind::ICON:
      reg = icon_reg(phi_ab, phi_ba, points);
      break;
    case RegularizerConfig::Kind::GradICON:
      reg = gradicon_reg(phi_ab, phi_ba, points, reg_cfg.dx);
      break;
    case RegularizerConfig::Kind::BendingEnergy: {
      const int H = ia.height(), W = ia.width();
      reg = scale(add(bending_energy_reg(export_displacement(phi_ab, H, W)),
                      bending_energy_reg(export_displacement(phi_ba, H, W))),
                  0.5);
      break;
    }
    case RegularizerConfig::Kind::Diffusion: {
      const int H = ia.height(), W = ia.width();
      reg = scale(add(diffusion_reg(export_displacement(phi_ab, H, W)),
                      diffusion_reg(export_displacement(phi_ba, H, W))),
                  0.5);
      break;
    }
  }
  Var total = add(add(sim_ab, sim_ba), scale(reg, reg_cfg.lambda));
  TotalLoss out;
  out.node = total;
  out.report = {sim_ab->value.data[0], sim_ba->value.data[0], reg->value.data[0],
                total->value.data[0]};
  return out;
}

// Both sides of the discrete correlation identity for a periodic field:
//   lhs = sum_axes sum_x |psi(x+delta e_a) - psi(x)|^2 / delta^2
//   rhs = sum_axes (2|psi|^2/delta^2)(1 - <psi, psi(.+delta e_a)>/|psi|^2)
// psi is (C,N) for 1-D or (C,H,W) for 2-D; delta is one grid step.
struct CorrelationIdentity {
  double lhs = 0.0, rhs = 0.0, abs_diff = 0.0;
};

inline CorrelationIdentity correlation_identity_check(const Tensor& psi, double delta) {
  if (delta <= 0.0) throw std::invalid_argument("correlation identity: delta must be > 0");
  double norm2 = 0.0;
  for (double v : psi.data) norm2 += v * v;
  if (norm2 == 0.0)
    throw std::invalid_argument("correlation identity: zero field is degenerate");
  const auto& s = psi.shape;
  const int C = s[0];
  const int H = s.size() == 3 ? s[1] : 1;
  const int W = s.size() == 3 ? s[2] : s[1];
  auto at = [&](int c, int y, int x) {
    y = ((y % H) + H) % H;
    x = ((x % W) + W) % W;
    return psi.data[(static_cast<long>(c) * H + y) * W + x];
  };
  CorrelationIdentity r;
  const int n_axes = (H > 1 ? 1 : 0) + 1;  // W axis always; H axis if 2-D
  for (int axis = (H > 1 ? 0 : 1); axis < 2; ++axis) {
    double diff2 = 0.0, inner = 0.0;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const double a = at(c, y, x);
          const double b = at(c, y + (axis == 0), x + (axis == 1));
          diff2 += (b - a) * (b - a);
          inner += a * b;
        }
    r.lhs += diff2 / (delta * delta);
    r.rhs += (2.0 * norm2 / (delta * delta)) * (1.0 - inner / norm2);
  }
  (void)n_axes;
  r.abs_diff = std::abs(r.lhs - r.rhs);
  return r;
}

// Diagnostic evaluation of the implicit-regularization proxy
//   |J_ab^{-1}|_F^2 det(J_ab) + |J_ba^{-1}|_F^2
// averaged over samples, using FD Jacobians. Not differentiated.
struct H1Proxy {
  double value = 0.0;
  long excluded = 0;
  long total = 0;
};

inline H1Proxy h1_proxy(const TransformMap& phi_ab, const TransformMap& phi_ba,
                        const Tensor& points, double dx = 1e-3) {
  Var pts = constant(points);
  Tensor Ja = jacobian_fd(phi_ab, pts, JacobianProbe{dx})->value;
  Tensor Jb = jacobian_fd(phi_ba, pts, JacobianProbe{dx})->value;
  const long N = points.shape[1];
  H1Proxy out;
  out.total = N;
  double acc = 0.0;
  long used = 0;
  auto inv_frob2 = [](double a, double b, double c, double d, double det) {
    // |M^{-1}|_F^2 = |M|_F^2 / det^2 for 2x2
    return (a * a + b * b + c * c + d * d) / (det * det);
  };
  for (long n = 0; n < N; ++n) {
    const double a0 = Ja.data[n], a1 = Ja.data[N + n], a2 = Ja.data[2 * N + n],
                 a3 = Ja.data[3 * N + n];
    const double b0 = Jb.data[n], b1 = Jb.data[N + n], b2 = Jb.data[2 * N + n],
                 b3 = Jb.data[3 * N + n];
    const double det_a = a0 * a3 - a1 * a2;
    const double det_b = b0 * b3 - b1 * b2;
    if (std::abs(det_a) <= 1e-8 || std::abs(det_b) <= 1e-8) {
      ++out.excluded;
      continue;
    }
    acc += inv_frob2(a0, a1, a2, a3, det_a) * det_a + inv_frob2(b0, b1, b2, b3, det_b);
    ++used;
  }
  if (out.excluded * 10 > out.total)
    throw std::runtime_error("h1_proxy: more than 10% singular Jacobians");
  out.value = used ? acc / used : 0.0;
  return out;
}

}  // namespace gradicon

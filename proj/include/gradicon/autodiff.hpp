// Reverse-mode automatic differentiation on dense tensors.
//
// A Var is a shared node in a DAG built eagerly by the op functions below.
// backward() walks the graph once in reverse topological order and
// accumulates gradients into every reachable leaf. Reduction order inside
// every op is fixed (plain left-to-right loops) so results are bit-stable
// across runs.
#pragma once

#include <functional>
#include <memory>
#include <unordered_set>

#include "gradicon/tensor.hpp"

namespace gradicon {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value, zero until backward touches it
  bool requires_grad = false;
  std::vector<Var> parents;
  // Reads this->grad, accumulates into parents' grad.
  std::function<void(Node&)> backprop;

  explicit Node(Tensor v, bool req = false)
      : value(std::move(v)), grad(Tensor::zeros_like(value)), requires_grad(req) {}
};

inline Var leaf(Tensor v) { return std::make_shared<Node>(std::move(v), true); }
inline Var constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }
inline Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

inline void zero_grad(const Var& v) {
  std::fill(v->grad.data.begin(), v->grad.data.end(), 0.0);
}

namespace detail {

inline bool needs_grad(const std::vector<Var>& ps) {
  for (const auto& p : ps)
    if (p->requires_grad) return true;
  return false;
}

inline Var make_node(Tensor value, std::vector<Var> parents,
                     std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>(std::move(value), needs_grad(parents));
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

inline void topo_order(const Var& root, std::vector<Node*>& order) {
  // Iterative post-order DFS; parents land before children in `order`.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({root.get(), 0});
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Seeds root with grad 1 and propagates. Repeated calls accumulate.
inline void backward(const Var& root) {
  if (!root->value.is_scalar())
    throw std::invalid_argument("backward: root must be scalar");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  detail::topo_order(root, order);
  root->grad.data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops. Binary ops accept equal shapes or one scalar operand.
// ---------------------------------------------------------------------------

namespace detail {

enum class BinKind { Add, Sub, Mul, Div };

inline Var binary(BinKind kind, const Var& a, const Var& b) {
  const Tensor& av = a->value;
  const Tensor& bv = b->value;
  const bool a_sc = av.is_scalar(), b_sc = bv.is_scalar();
  if (!same_shape(av, bv) && !a_sc && !b_sc)
    throw std::invalid_argument("binary op: shape mismatch " + shape_str(av.shape) +
                                " vs " + shape_str(bv.shape));
  const Tensor& big = a_sc ? bv : av;
  const long n = big.numel();
  Tensor out(big.shape);
  auto A = [&](long i) { return av.data[a_sc ? 0 : i]; };
  auto B = [&](long i) { return bv.data[b_sc ? 0 : i]; };
  switch (kind) {
    case BinKind::Add:
      for (long i = 0; i < n; ++i) out.data[i] = A(i) + B(i);
      break;
    case BinKind::Sub:
      for (long i = 0; i < n; ++i) out.data[i] = A(i) - B(i);
      break;
    case BinKind::Mul:
      for (long i = 0; i < n; ++i) out.data[i] = A(i) * B(i);
      break;
    case BinKind::Div:
      for (long i = 0; i < n; ++i) {
        if (B(i) == 0.0) throw std::invalid_argument("div: zero denominator");
        out.data[i] = A(i) / B(i);
      }
      break;
  }
  return make_node(std::move(out), {a, b}, [kind, a_sc, b_sc, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad.data;
    auto acc_a = [&](long i, double v) { pa.grad.data[a_sc ? 0 : i] += v; };
    auto acc_b = [&](long i, double v) { pb.grad.data[b_sc ? 0 : i] += v; };
    auto A = [&](long i) { return pa.value.data[a_sc ? 0 : i]; };
    auto B = [&](long i) { return pb.value.data[b_sc ? 0 : i]; };
    switch (kind) {
      case BinKind::Add:
        if (pa.requires_grad)
          for (long i = 0; i < n; ++i) acc_a(i, g[i]);
        if (pb.requires_grad)
          for (long i = 0; i < n; ++i) acc_b(i, g[i]);
        break;
      case BinKind::Sub:
        if (pa.requires_grad)
          for (long i = 0; i < n; ++i) acc_a(i, g[i]);
        if (pb.requires_grad)
          for (long i = 0; i < n; ++i) acc_b(i, -g[i]);
        break;
      case BinKind::Mul:
        if (pa.requires_grad)
          for (long i = 0; i < n; ++i) acc_a(i, g[i] * B(i));
        if (pb.requires_grad)
          for (long i = 0; i < n; ++i) acc_b(i, g[i] * A(i));
        break;
      case BinKind::Div:
        if (pa.requires_grad)
          for (long i = 0; i < n; ++i) acc_a(i, g[i] / B(i));
        if (pb.requires_grad)
          for (long i = 0; i < n; ++i) acc_b(i, -g[i] * A(i) / (B(i) * B(i)));
        break;
    }
  });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) { return detail::binary(detail::BinKind::Add, a, b); }
inline Var sub(const Var& a, const Var& b) { return detail::binary(detail::BinKind::Sub, a, b); }
inline Var mul(const Var& a, const Var& b) { return detail::binary(detail::BinKind::Mul, a, b); }
inline Var div(const Var& a, const Var& b) { return detail::binary(detail::BinKind::Div, a, b); }

inline Var neg(const Var& a) {
  Tensor out(a->value.shape);
  const long n = out.numel();
  for (long i = 0; i < n; ++i) out.data[i] = -a->value.data[i];
  return detail::make_node(std::move(out), {a}, [n](Node& self) {
    for (long i = 0; i < n; ++i) self.parents[0]->grad.data[i] -= self.grad.data[i];
  });
}

inline Var square(const Var& a) {
  Tensor out(a->value.shape);
  const long n = out.numel();
  for (long i = 0; i < n; ++i) out.data[i] = a->value.data[i] * a->value.data[i];
  return detail::make_node(std::move(out), {a}, [n](Node& self) {
    Node& p = *self.parents[0];
    for (long i = 0; i < n; ++i)
      p.grad.data[i] += 2.0 * p.value.data[i] * self.grad.data[i];
  });
}

inline Var sqrt(const Var& a) {
  Tensor out(a->value.shape);
  const long n = out.numel();
  for (long i = 0; i < n; ++i) {
    if (a->value.data[i] < 0.0) throw std::invalid_argument("sqrt: negative input");
    out.data[i] = std::sqrt(a->value.data[i]);
  }
  Tensor saved = out;
  return detail::make_node(std::move(out), {a}, [n, saved](Node& self) {
    Node& p = *self.parents[0];
    for (long i = 0; i < n; ++i)
      p.grad.data[i] += self.grad.data[i] / (2.0 * std::max(saved.data[i], 1e-300));
  });
}

// Clamp to [lo, hi]; subgradient 0 where clamped.
inline Var clipval(const Var& a, double lo, double hi) {
  Tensor out(a->value.shape);
  const long n = out.numel();
  for (long i = 0; i < n; ++i) out.data[i] = std::clamp(a->value.data[i], lo, hi);
  return detail::make_node(std::move(out), {a}, [n, lo, hi](Node& self) {
    Node& p = *self.parents[0];
    for (long i = 0; i < n; ++i) {
      const double v = p.value.data[i];
      if (v >= lo && v <= hi) p.grad.data[i] += self.grad.data[i];
    }
  });
}

inline Var scale(const Var& a, double c) {
  Tensor out(a->value.shape);
  const long n = out.numel();
  for (long i = 0; i < n; ++i) out.data[i] = c * a->value.data[i];
  return detail::make_node(std::move(out), {a}, [n, c](Node& self) {
    for (long i = 0; i < n; ++i) self.parents[0]->grad.data[i] += c * self.grad.data[i];
  });
}

inline Var add_scalar(const Var& a, double c) {
  Tensor out(a->value.shape);
  const long n = out.numel();
  for (long i = 0; i < n; ++i) out.data[i] = a->value.data[i] + c;
  return detail::make_node(std::move(out), {a}, [n](Node& self) {
    for (long i = 0; i < n; ++i) self.parents[0]->grad.data[i] += self.grad.data[i];
  });
}

inline Var leaky_relu(const Var& a, double slope = 0.2) {
  Tensor out(a->value.shape);
  const long n = out.numel();
  for (long i = 0; i < n; ++i) {
    const double v = a->value.data[i];
    out.data[i] = v >= 0.0 ? v : slope * v;
  }
  return detail::make_node(std::move(out), {a}, [n, slope](Node& self) {
    Node& p = *self.parents[0];
    for (long i = 0; i < n; ++i)
      p.grad.data[i] += (p.value.data[i] >= 0.0 ? 1.0 : slope) * self.grad.data[i];
  });
}

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a->value.data) s += v;
  const long n = a->value.numel();
  return detail::make_node(Tensor::scalar(s), {a}, [n](Node& self) {
    const double g = self.grad.data[0];
    for (long i = 0; i < n; ++i) self.parents[0]->grad.data[i] += g;
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / a->value.numel()); }

// Pure view: same data, new shape.
inline Var reshape(const Var& a, std::vector<int> shape) {
  if (Tensor::numel_of(shape) != a->value.numel())
    throw std::invalid_argument("reshape: numel mismatch");
  Tensor out(std::move(shape), a->value.data);
  const long n = out.numel();
  return detail::make_node(std::move(out), {a}, [n](Node& self) {
    for (long i = 0; i < n; ++i) self.parents[0]->grad.data[i] += self.grad.data[i];
  });
}

// ---------------------------------------------------------------------------
// Spatial ops on CHW tensors.
// ---------------------------------------------------------------------------

inline Var concat_channels(const Var& a, const Var& b) {
  const auto& as = a->value.shape;
  const auto& bs = b->value.shape;
  if (as.size() != 3 || bs.size() != 3 || as[1] != bs[1] || as[2] != bs[2])
    throw std::invalid_argument("concat_channels: incompatible shapes");
  Tensor out({as[0] + bs[0], as[1], as[2]});
  std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
  std::copy(b->value.data.begin(), b->value.data.end(),
            out.data.begin() + a->value.numel());
  const long na = a->value.numel(), nb = b->value.numel();
  return detail::make_node(std::move(out), {a, b}, [na, nb](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad)
      for (long i = 0; i < na; ++i) pa.grad.data[i] += self.grad.data[i];
    if (pb.requires_grad)
      for (long i = 0; i < nb; ++i) pb.grad.data[i] += self.grad.data[na + i];
  });
}

// 2x2 mean pooling, stride 2. Odd trailing row/column is truncated.
inline Var avg_pool2(const Var& a) {
  const auto& s = a->value.shape;
  if (s.size() != 3) throw std::invalid_argument("avg_pool2: expects CHW");
  const int C = s[0], H = s[1], W = s[2];
  const int Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) throw std::invalid_argument("avg_pool2: input too small");
  Tensor out({C, Ho, Wo});
  const auto& in = a->value.data;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < Ho; ++y)
      for (int x = 0; x < Wo; ++x) {
        const long base = (static_cast<long>(c) * H + 2 * y) * W + 2 * x;
        out.data[(static_cast<long>(c) * Ho + y) * Wo + x] =
            0.25 * (in[base] + in[base + 1] + in[base + W] + in[base + W + 1]);
      }
  return detail::make_node(std::move(out), {a}, [C, H, W, Ho, Wo](Node& self) {
    Node& p = *self.parents[0];
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x) {
          const double g = 0.25 * self.grad.data[(static_cast<long>(c) * Ho + y) * Wo + x];
          const long base = (static_cast<long>(c) * H + 2 * y) * W + 2 * x;
          p.grad.data[base] += g;
          p.grad.data[base + 1] += g;
          p.grad.data[base + W] += g;
          p.grad.data[base + W + 1] += g;
        }
  });
}

inline Var upsample2_nearest(const Var& a) {
  const auto& s = a->value.shape;
  if (s.size() != 3) throw std::invalid_argument("upsample2_nearest: expects CHW");
  const int C = s[0], H = s[1], W = s[2];
  Tensor out({C, 2 * H, 2 * W});
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < 2 * H; ++y)
      for (int x = 0; x < 2 * W; ++x)
        out.data[(static_cast<long>(c) * 2 * H + y) * 2 * W + x] =
            a->value.data[(static_cast<long>(c) * H + y / 2) * W + x / 2];
  return detail::make_node(std::move(out), {a}, [C, H, W](Node& self) {
    Node& p = *self.parents[0];
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < 2 * H; ++y)
        for (int x = 0; x < 2 * W; ++x)
          p.grad.data[(static_cast<long>(c) * H + y / 2) * W + x / 2] +=
              self.grad.data[(static_cast<long>(c) * 2 * H + y) * 2 * W + x];
  });
}

// Cross-correlation of a CHW input with an (O,C,kh,kw) kernel plus an
// optional per-output-channel bias of shape (O). Loops are arranged so the
// innermost dimension is contiguous for both forward and backward.
inline Var conv2d_hw(const Var& input, const Var& kernel, const Var& bias,
                     int stride, int pad_h, int pad_w) {
  const auto& is = input->value.shape;
  const auto& ks = kernel->value.shape;
  if (is.size() != 3 || ks.size() != 4)
    throw std::invalid_argument("conv2d: expects CHW input and OCKK kernel");
  const int C = is[0], H = is[1], W = is[2];
  const int O = ks[0], KC = ks[1], KH = ks[2], KW = ks[3];
  if (KC != C) throw std::invalid_argument("conv2d: channel count mismatch");
  if (KH > H + 2 * pad_h || KW > W + 2 * pad_w)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  if (bias && bias->value.numel() != O)
    throw std::invalid_argument("conv2d: bias size mismatch");
  const int Ho = (H + 2 * pad_h - KH) / stride + 1;
  const int Wo = (W + 2 * pad_w - KW) / stride + 1;
  Tensor out({O, Ho, Wo});
  const double* in = input->value.data.data();
  const double* k = kernel->value.data.data();
  for (int o = 0; o < O; ++o) {
    double* op = out.data.data() + static_cast<long>(o) * Ho * Wo;
    const double b = bias ? bias->value.data[o] : 0.0;
    std::fill(op, op + static_cast<long>(Ho) * Wo, b);
    for (int c = 0; c < C; ++c)
      for (int ky = 0; ky < KH; ++ky)
        for (int kx = 0; kx < KW; ++kx) {
          const double w = k[((static_cast<long>(o) * C + c) * KH + ky) * KW + kx];
          if (w == 0.0) continue;
          for (int y = 0; y < Ho; ++y) {
            const int iy = y * stride + ky - pad_h;
            if (iy < 0 || iy >= H) continue;
            const double* irow = in + (static_cast<long>(c) * H + iy) * W;
            double* orow = op + static_cast<long>(y) * Wo;
            if (stride == 1) {
              const int x0 = std::max(0, pad_w - kx);
              const int x1 = std::min(Wo, W + pad_w - kx);
              for (int x = x0; x < x1; ++x) orow[x] += w * irow[x + kx - pad_w];
            } else {
              for (int x = 0; x < Wo; ++x) {
                const int ix = x * stride + kx - pad_w;
                if (ix >= 0 && ix < W) orow[x] += w * irow[ix];
              }
            }
          }
        }
  }
  std::vector<Var> parents = {input, kernel};
  if (bias) parents.push_back(bias);
  const bool has_bias = static_cast<bool>(bias);
  return detail::make_node(
      std::move(out), std::move(parents),
      [C, H, W, O, KH, KW, Ho, Wo, stride, pad_h, pad_w, has_bias](Node& self) {
        Node& pin = *self.parents[0];
        Node& pk = *self.parents[1];
        const double* g = self.grad.data.data();
        const double* in = pin.value.data.data();
        const double* k = pk.value.data.data();
        for (int o = 0; o < O; ++o) {
          const double* gop = g + static_cast<long>(o) * Ho * Wo;
          if (has_bias && self.parents[2]->requires_grad) {
            double s = 0.0;
            for (long i = 0; i < static_cast<long>(Ho) * Wo; ++i) s += gop[i];
            self.parents[2]->grad.data[o] += s;
          }
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < KH; ++ky)
              for (int kx = 0; kx < KW; ++kx) {
                const long kidx = ((static_cast<long>(o) * C + c) * KH + ky) * KW + kx;
                const double w = k[kidx];
                double kg = 0.0;
                for (int y = 0; y < Ho; ++y) {
                  const int iy = y * stride + ky - pad_h;
                  if (iy < 0 || iy >= H) continue;
                  const double* irow = in + (static_cast<long>(c) * H + iy) * W;
                  double* girow = pin.grad.data.data() + (static_cast<long>(c) * H + iy) * W;
                  const double* grow = gop + static_cast<long>(y) * Wo;
                  if (stride == 1) {
                    const int x0 = std::max(0, pad_w - kx);
                    const int x1 = std::min(Wo, W + pad_w - kx);
                    if (pin.requires_grad)
                      for (int x = x0; x < x1; ++x) girow[x + kx - pad_w] += w * grow[x];
                    if (pk.requires_grad)
                      for (int x = x0; x < x1; ++x) kg += irow[x + kx - pad_w] * grow[x];
                  } else {
                    for (int x = 0; x < Wo; ++x) {
                      const int ix = x * stride + kx - pad_w;
                      if (ix < 0 || ix >= W) continue;
                      if (pin.requires_grad) girow[ix] += w * grow[x];
                      if (pk.requires_grad) kg += irow[ix] * grow[x];
                    }
                  }
                }
                if (pk.requires_grad) pk.grad.data[kidx] += kg;
              }
        }
      });
}

inline Var conv2d(const Var& input, const Var& kernel, const Var& bias = nullptr,
                  int stride = 1, int pad = 0) {
  return conv2d_hw(input, kernel, bias, stride, pad, pad);
}

// Multilinear sampling of a CHW field at normalized 2-D points (shape (2,N)).
// Grid value (i,j) lives at ((i+0.5)/H, (j+0.5)/W) in [0,1]^2; coordinate row
// 0 addresses the H axis. Points are clamped to [0,1]^2 before lookup and the
// coordinate gradient is zero in clamped directions.
inline Var grid_sample(const Var& field, const Var& points) {
  const auto& fs = field->value.shape;
  const auto& ps = points->value.shape;
  if (fs.size() != 3) throw std::invalid_argument("grid_sample: field must be CHW");
  if (ps.size() != 2 || ps[0] != 2)
    throw std::invalid_argument("grid_sample: points must be (2,N)");
  const int C = fs[0], H = fs[1], W = fs[2];
  const long N = ps[1];
  Tensor out({C, static_cast<int>(N)});
  const double* f = field->value.data.data();
  const double* p = points->value.data.data();
  for (long n = 0; n < N; ++n) {
    const double py = std::clamp(p[n], 0.0, 1.0);
    const double px = std::clamp(p[N + n], 0.0, 1.0);
    const double u = py * H - 0.5, v = px * W - 0.5;
    const int i0 = static_cast<int>(std::floor(u));
    const int j0 = static_cast<int>(std::floor(v));
    const double t = u - i0, s = v - j0;
    const int i0c = std::clamp(i0, 0, H - 1), i1c = std::clamp(i0 + 1, 0, H - 1);
    const int j0c = std::clamp(j0, 0, W - 1), j1c = std::clamp(j0 + 1, 0, W - 1);
    for (int c = 0; c < C; ++c) {
      const double* fc = f + static_cast<long>(c) * H * W;
      const double a = (1 - s) * fc[static_cast<long>(i0c) * W + j0c] +
                       s * fc[static_cast<long>(i0c) * W + j1c];
      const double b = (1 - s) * fc[static_cast<long>(i1c) * W + j0c] +
                       s * fc[static_cast<long>(i1c) * W + j1c];
      out.data[c * N + n] = (1 - t) * a + t * b;
    }
  }
  return detail::make_node(std::move(out), {field, points}, [C, H, W, N](Node& self) {
    Node& pf = *self.parents[0];
    Node& pp = *self.parents[1];
    const double* f = pf.value.data.data();
    const double* p = pp.value.data.data();
    const double* g = self.grad.data.data();
    for (long n = 0; n < N; ++n) {
      const double y_raw = p[n], x_raw = p[N + n];
      const double py = std::clamp(y_raw, 0.0, 1.0);
      const double px = std::clamp(x_raw, 0.0, 1.0);
      const double u = py * H - 0.5, v = px * W - 0.5;
      const int i0 = static_cast<int>(std::floor(u));
      const int j0 = static_cast<int>(std::floor(v));
      const double t = u - i0, s = v - j0;
      const int i0c = std::clamp(i0, 0, H - 1), i1c = std::clamp(i0 + 1, 0, H - 1);
      const int j0c = std::clamp(j0, 0, W - 1), j1c = std::clamp(j0 + 1, 0, W - 1);
      double gy = 0.0, gx = 0.0;
      for (int c = 0; c < C; ++c) {
        const double go = g[c * N + n];
        if (go == 0.0) continue;
        const double* fc = f + static_cast<long>(c) * H * W;
        const double f00 = fc[static_cast<long>(i0c) * W + j0c];
        const double f01 = fc[static_cast<long>(i0c) * W + j1c];
        const double f10 = fc[static_cast<long>(i1c) * W + j0c];
        const double f11 = fc[static_cast<long>(i1c) * W + j1c];
        if (pf.requires_grad) {
          double* gfc = pf.grad.data.data() + static_cast<long>(c) * H * W;
          gfc[static_cast<long>(i0c) * W + j0c] += go * (1 - t) * (1 - s);
          gfc[static_cast<long>(i0c) * W + j1c] += go * (1 - t) * s;
          gfc[static_cast<long>(i1c) * W + j0c] += go * t * (1 - s);
          gfc[static_cast<long>(i1c) * W + j1c] += go * t * s;
        }
        gy += go * ((1 - s) * (f10 - f00) + s * (f11 - f01));
        gx += go * ((1 - t) * (f01 - f00) + t * (f11 - f10));
      }
      if (pp.requires_grad) {
        if (y_raw >= 0.0 && y_raw <= 1.0) pp.grad.data[n] += gy * H;
        if (x_raw >= 0.0 && x_raw <= 1.0) pp.grad.data[N + n] += gx * W;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Gradient verification against central finite differences.
// ---------------------------------------------------------------------------

// Builds the scalar graph twice per perturbed coordinate and compares the
// tape gradient to (f(x+eps)-f(x-eps))/(2 eps). Returns the max of
// |ad - fd| / (|fd| + 1e-8) over all leaf coordinates.
inline double check_gradients(
    const std::vector<Tensor>& leaf_values,
    const std::function<Var(const std::vector<Var>&)>& build, double eps = 1e-5) {
  std::vector<Var> leaves;
  leaves.reserve(leaf_values.size());
  for (const auto& t : leaf_values) leaves.push_back(leaf(t));
  Var root = build(leaves);
  backward(root);

  auto eval = [&](const std::vector<Tensor>& vals) {
    std::vector<Var> ls;
    ls.reserve(vals.size());
    for (const auto& t : vals) ls.push_back(constant(t));
    return build(ls)->value.data[0];
  };

  double worst = 0.0;
  std::vector<Tensor> vals = leaf_values;
  for (size_t li = 0; li < vals.size(); ++li) {
    for (size_t i = 0; i < vals[li].data.size(); ++i) {
      const double orig = vals[li].data[i];
      vals[li].data[i] = orig + eps;
      const double fp = eval(vals);
      vals[li].data[i] = orig - eps;
      const double fm = eval(vals);
      vals[li].data[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = leaves[li]->grad.data[i];
      worst = std::max(worst, std::abs(ad - fd) / (std::abs(fd) + 1e-8));
    }
  }
  return worst;
}

}  // namespace gradicon

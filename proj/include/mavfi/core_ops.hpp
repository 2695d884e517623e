// SPDX-License-Identifier: Apache-2.0
//
// Differentiable image primitives: backward warping, guide-map fusion,
// bilinear resizing (with flow magnitude rescaling) and the L1 spatial
// gradient used by the smoothness term. Each op has a plain forward kernel,
// an explicit adjoint, and an autograd wrapper in mavfi::ag.
#pragma once

#include <cmath>
#include <vector>

#include "mavfi/autograd.hpp"
#include "mavfi/tensor.hpp"

namespace mavfi {

/// Displacement field [2, H, W] in pixels of its own resolution (u = horizontal, v = vertical).
template <class T>
class FlowField {
 public:
  FlowField() = default;
  explicit FlowField(Tensor<T> data) : data_(std::move(data)) {
    expect(data_.rank() == 3 && data_.channels() == 2, "FlowField needs a [2,H,W] tensor, got ",
           shape_str(data_.shape()));
  }
  FlowField(int h, int w, T u = 0, T v = 0) : data_(2, h, w) {
    std::fill_n(data_.channel(0), data_.plane(), u);
    std::fill_n(data_.channel(1), data_.plane(), v);
  }
  const Tensor<T>& tensor() const { return data_; }
  Tensor<T>& tensor() { return data_; }
  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  T u(int y, int x) const { return data_.at(0, y, x); }
  T v(int y, int x) const { return data_.at(1, y, x); }
  bool empty() const { return data_.empty(); }

 private:
  Tensor<T> data_;
};

/// RGB image [3, H, W] with values in [0, 1].
template <class T>
class Frame {
 public:
  Frame() = default;
  explicit Frame(Tensor<T> data) : data_(std::move(data)) {
    expect(data_.rank() == 3 && data_.channels() == 3, "Frame needs a [3,H,W] tensor, got ",
           shape_str(data_.shape()));
  }
  Frame(int h, int w, T fill = 0) : data_(3, h, w, fill) {}
  const Tensor<T>& tensor() const { return data_; }
  Tensor<T>& tensor() { return data_; }
  int height() const { return data_.height(); }
  int width() const { return data_.width(); }
  bool operator==(const Frame& o) const { return data_ == o.data_; }

 private:
  Tensor<T> data_;
};

// ---------------------------------------------------------------------------
// warp

namespace detail {

/// Bilinear tap for one sampling position with clamp-to-edge coordinates.
template <class T>
struct Tap {
  int x0, x1, y0, y1;
  T wx, wy;
  bool clamped_x, clamped_y;
};

template <class T>
Tap<T> make_tap(T sx, T sy, int w, int h) {
  Tap<T> t{};
  const T max_x = static_cast<T>(w - 1), max_y = static_cast<T>(h - 1);
  t.clamped_x = !(sx > 0 && sx < max_x);
  t.clamped_y = !(sy > 0 && sy < max_y);
  sx = std::clamp(sx, T(0), max_x);
  sy = std::clamp(sy, T(0), max_y);
  const T fx = std::floor(sx), fy = std::floor(sy);
  t.x0 = static_cast<int>(fx);
  t.y0 = static_cast<int>(fy);
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = sx - fx;
  t.wy = sy - fy;
  // NaN coordinates read pixel 0 with a NaN weight so the NaN propagates.
  if (std::isnan(sx)) t.x0 = t.x1 = 0;
  if (std::isnan(sy)) t.y0 = t.y1 = 0;
  return t;
}

}  // namespace detail

/// out(p) = bilinear sample of src at p + flow(p), coordinates clamped to the border.
template <class T>
Tensor<T> warp(const Tensor<T>& src, const Tensor<T>& flow) {
  expect(flow.rank() == 3 && flow.channels() == 2, "warp: flow must be [2,H,W]");
  expect_same_hw(src, flow, "warp");
  const int C = src.channels(), H = src.height(), W = src.width();
  Tensor<T> out(src.shape());
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto t = detail::make_tap<T>(x + flow.at(0, y, x), y + flow.at(1, y, x), W, H);
      for (int c = 0; c < C; ++c) {
        const T* s = src.channel(c);
        const T top = (1 - t.wx) * s[t.y0 * W + t.x0] + t.wx * s[t.y0 * W + t.x1];
        const T bot = (1 - t.wx) * s[t.y1 * W + t.x0] + t.wx * s[t.y1 * W + t.x1];
        out.at(c, y, x) = (1 - t.wy) * top + t.wy * bot;
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> warp(const Tensor<T>& src, const FlowField<T>& flow) {
  return warp(src, flow.tensor());
}

/// Adjoint of warp. Either output pointer may be null.
template <class T>
void warp_backward(const Tensor<T>& src, const Tensor<T>& flow, const Tensor<T>& grad_out, Tensor<T>* grad_src,
                   Tensor<T>* grad_flow) {
  const int C = src.channels(), H = src.height(), W = src.width();
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const auto t = detail::make_tap<T>(x + flow.at(0, y, x), y + flow.at(1, y, x), W, H);
      T du = 0, dv = 0;
      for (int c = 0; c < C; ++c) {
        const T g = grad_out.at(c, y, x);
        if (g == T(0)) continue;
        const T* s = src.channel(c);
        const T v00 = s[t.y0 * W + t.x0], v01 = s[t.y0 * W + t.x1];
        const T v10 = s[t.y1 * W + t.x0], v11 = s[t.y1 * W + t.x1];
        if (grad_src) {
          T* d = grad_src->channel(c);
          d[t.y0 * W + t.x0] += g * (1 - t.wy) * (1 - t.wx);
          d[t.y0 * W + t.x1] += g * (1 - t.wy) * t.wx;
          d[t.y1 * W + t.x0] += g * t.wy * (1 - t.wx);
          d[t.y1 * W + t.x1] += g * t.wy * t.wx;
        }
        du += g * ((1 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
        dv += g * ((1 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
      }
      if (grad_flow) {
        if (!t.clamped_x) grad_flow->at(0, y, x) += du;
        if (!t.clamped_y) grad_flow->at(1, y, x) += dv;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// fuse

/// out = a * g + b * (1 - g), g broadcast over channels.
template <class T>
Tensor<T> fuse(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& g) {
  expect_same_shape(a, b, "fuse");
  expect(g.rank() == 3 && g.channels() == 1, "fuse: guide map must be [1,H,W]");
  expect_same_hw(a, g, "fuse");
  Tensor<T> out(a.shape());
  const std::size_t P = a.plane();
  for (int c = 0; c < a.channels(); ++c) {
    const T* pa = a.channel(c);
    const T* pb = b.channel(c);
    T* po = out.channel(c);
    for (std::size_t i = 0; i < P; ++i) po[i] = pa[i] * g[i] + pb[i] * (1 - g[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// resize

namespace detail {

/// Half-pixel-centre bilinear taps (the align_corners = false convention):
/// src = (dst + 0.5) * in / out - 0.5, clamped below at 0, upper neighbour clamped to in - 1.
struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

inline AxisTaps axis_taps(int in, int out) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  const double ratio = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double s = (i + 0.5) * ratio - 0.5;
    if (s < 0) s = 0;
    int lo = std::min(static_cast<int>(std::floor(s)), in - 1);
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = s - lo;
  }
  return t;
}

inline int scaled_extent(int n, double scale) {
  return std::max(1, static_cast<int>(std::lround(n * scale)));
}

}  // namespace detail

template <class T>
Tensor<T> resize_to(const Tensor<T>& x, int out_h, int out_w) {
  expect(out_h > 0 && out_w > 0, "resize: output extent must be positive");
  const auto ty = detail::axis_taps(x.height(), out_h);
  const auto tx = detail::axis_taps(x.width(), out_w);
  const int W = x.width();
  Tensor<T> out(x.channels(), out_h, out_w);
  for (int c = 0; c < x.channels(); ++c) {
    const T* s = x.channel(c);
    for (int y = 0; y < out_h; ++y) {
      const T wy = static_cast<T>(ty.frac[y]);
      const T* r0 = s + ty.lo[y] * W;
      const T* r1 = s + ty.hi[y] * W;
      for (int xx = 0; xx < out_w; ++xx) {
        const T wx = static_cast<T>(tx.frac[xx]);
        const T top = (1 - wx) * r0[tx.lo[xx]] + wx * r0[tx.hi[xx]];
        const T bot = (1 - wx) * r1[tx.lo[xx]] + wx * r1[tx.hi[xx]];
        out.at(c, y, xx) = (1 - wy) * top + wy * bot;
      }
    }
  }
  return out;
}

template <class T>
void resize_backward(const Tensor<T>& grad_out, Tensor<T>& grad_in) {
  const int out_h = grad_out.height(), out_w = grad_out.width();
  const auto ty = detail::axis_taps(grad_in.height(), out_h);
  const auto tx = detail::axis_taps(grad_in.width(), out_w);
  const int W = grad_in.width();
  for (int c = 0; c < grad_out.channels(); ++c) {
    T* d = grad_in.channel(c);
    for (int y = 0; y < out_h; ++y) {
      const T wy = static_cast<T>(ty.frac[y]);
      for (int xx = 0; xx < out_w; ++xx) {
        const T wx = static_cast<T>(tx.frac[xx]);
        const T g = grad_out.at(c, y, xx);
        d[ty.lo[y] * W + tx.lo[xx]] += g * (1 - wy) * (1 - wx);
        d[ty.lo[y] * W + tx.hi[xx]] += g * (1 - wy) * wx;
        d[ty.hi[y] * W + tx.lo[xx]] += g * wy * (1 - wx);
        d[ty.hi[y] * W + tx.hi[xx]] += g * wy * wx;
      }
    }
  }
}

/// Bilinear resize to [C, round(scale*H), round(scale*W)].
template <class T>
Tensor<T> resize_bilinear(const Tensor<T>& x, double scale) {
  expect(scale > 0 && std::isfinite(scale), "resize_bilinear: scale must be positive, got ", scale);
  return resize_to(x, detail::scaled_extent(x.height(), scale), detail::scaled_extent(x.width(), scale));
}

/// Per-axis factors applied to (u, v) after resizing a flow from (h, w) to (oh, ow).
inline std::pair<double, double> flow_magnitude_factors(int h, int w, int oh, int ow) {
  return {static_cast<double>(ow) / w, static_cast<double>(oh) / h};
}

/// Resize a flow and rescale its displacements into the new pixel units.
/// With exact extents the factor is `scale`; otherwise the realised per-axis ratio.
template <class T>
FlowField<T> rescale_flow(const FlowField<T>& f, double scale) {
  Tensor<T> out = resize_bilinear(f.tensor(), scale);
  const auto [su, sv] = flow_magnitude_factors(f.height(), f.width(), out.height(), out.width());
  for (std::size_t i = 0; i < out.plane(); ++i) {
    out.channel(0)[i] *= static_cast<T>(su);
    out.channel(1)[i] *= static_cast<T>(sv);
  }
  return FlowField<T>(std::move(out));
}

// ---------------------------------------------------------------------------
// spatial gradient

/// mean_{c,valid}|f(x+1,y) - f(x,y)| + mean_{c,valid}|f(x,y+1) - f(x,y)|.
/// A direction with no valid pairs (extent 1) contributes 0.
template <class T>
T spatial_gradient_l1(const Tensor<T>& f) {
  const int C = f.channels(), H = f.height(), W = f.width();
  T sx = 0, sy = 0;
  for (int c = 0; c < C; ++c) {
    const T* p = f.channel(c);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x + 1 < W; ++x) sx += std::abs(p[y * W + x + 1] - p[y * W + x]);
    for (int y = 0; y + 1 < H; ++y)
      for (int x = 0; x < W; ++x) sy += std::abs(p[(y + 1) * W + x] - p[y * W + x]);
  }
  T out = 0;
  if (W > 1) out += sx / static_cast<T>(static_cast<std::size_t>(C) * H * (W - 1));
  if (H > 1) out += sy / static_cast<T>(static_cast<std::size_t>(C) * (H - 1) * W);
  return out;
}

template <class T>
T spatial_gradient_l1(const FlowField<T>& f) {
  return spatial_gradient_l1(f.tensor());
}

template <class T>
void spatial_gradient_l1_backward(const Tensor<T>& f, T grad_out, Tensor<T>& grad_f) {
  const int C = f.channels(), H = f.height(), W = f.width();
  auto sgn = [](T d) { return d > 0 ? T(1) : (d < 0 ? T(-1) : T(0)); };
  const T kx = W > 1 ? grad_out / static_cast<T>(static_cast<std::size_t>(C) * H * (W - 1)) : T(0);
  const T ky = H > 1 ? grad_out / static_cast<T>(static_cast<std::size_t>(C) * (H - 1) * W) : T(0);
  for (int c = 0; c < C; ++c) {
    const T* p = f.channel(c);
    T* g = grad_f.channel(c);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x + 1 < W; ++x) {
        const T s = kx * sgn(p[y * W + x + 1] - p[y * W + x]);
        g[y * W + x + 1] += s;
        g[y * W + x] -= s;
      }
    for (int y = 0; y + 1 < H; ++y)
      for (int x = 0; x < W; ++x) {
        const T s = ky * sgn(p[(y + 1) * W + x] - p[y * W + x]);
        g[(y + 1) * W + x] += s;
        g[y * W + x] -= s;
      }
  }
}

// ---------------------------------------------------------------------------
// autograd wrappers

namespace ag {

template <class T>
Var<T> warp(const Var<T>& src, const Var<T>& flow) {
  auto out = mavfi::warp(src.value(), flow.value());
  return record<T>(std::move(out), {src, flow}, [](Node<T>& n) {
    auto& s = n.parents[0]->value;
    auto& f = n.parents[1]->value;
    warp_backward(s, f, n.grad, n.parent_needs(0) ? &n.parent_grad(0) : nullptr,
                  n.parent_needs(1) ? &n.parent_grad(1) : nullptr);
  });
}

template <class T>
Var<T> fuse(const Var<T>& a, const Var<T>& b, const Var<T>& g) {
  auto out = mavfi::fuse(a.value(), b.value(), g.value());
  return record<T>(std::move(out), {a, b, g}, [](Node<T>& n) {
    const auto& va = n.parents[0]->value;
    const auto& vb = n.parents[1]->value;
    const auto& vg = n.parents[2]->value;
    const std::size_t P = va.plane();
    for (int c = 0; c < va.channels(); ++c) {
      const T* go = n.grad.channel(c);
      if (n.parent_needs(0)) {
        T* d = n.parent_grad(0).channel(c);
        for (std::size_t i = 0; i < P; ++i) d[i] += go[i] * vg[i];
      }
      if (n.parent_needs(1)) {
        T* d = n.parent_grad(1).channel(c);
        for (std::size_t i = 0; i < P; ++i) d[i] += go[i] * (1 - vg[i]);
      }
      if (n.parent_needs(2)) {
        T* d = n.parent_grad(2).data();
        const T* pa = va.channel(c);
        const T* pb = vb.channel(c);
        for (std::size_t i = 0; i < P; ++i) d[i] += go[i] * (pa[i] - pb[i]);
      }
    }
  });
}

template <class T>
Var<T> resize_bilinear(const Var<T>& x, double scale) {
  auto out = mavfi::resize_bilinear(x.value(), scale);
  return record<T>(std::move(out), {x}, [](Node<T>& n) { resize_backward(n.grad, n.parent_grad(0)); });
}

template <class T>
Var<T> rescale_flow(const Var<T>& f, double scale) {
  expect(f.value().channels() == 2, "rescale_flow: flow must be [2,H,W]");
  auto out = mavfi::rescale_flow(FlowField<T>(f.value()), scale).tensor();
  const auto [su, sv] = flow_magnitude_factors(f.value().height(), f.value().width(), out.height(), out.width());
  return record<T>(std::move(out), {f}, [su = su, sv = sv](Node<T>& n) {
    Tensor<T> g = n.grad;
    for (std::size_t i = 0; i < g.plane(); ++i) {
      g.channel(0)[i] *= static_cast<T>(su);
      g.channel(1)[i] *= static_cast<T>(sv);
    }
    resize_backward(g, n.parent_grad(0));
  });
}

template <class T>
Var<T> spatial_gradient_l1(const Var<T>& f) {
  Tensor<T> out(Shape{1}, mavfi::spatial_gradient_l1(f.value()));
  return record<T>(std::move(out), {f}, [](Node<T>& n) {
    spatial_gradient_l1_backward(n.parents[0]->value, n.grad[0], n.parent_grad(0));
  });
}

}  // namespace ag
}  // namespace mavfi

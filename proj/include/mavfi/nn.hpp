// SPDX-License-Identifier: Apache-2.0
//
// Network layers on the autograd tape: strided convolution, transposed
// convolution, PReLU, logistic squashing, clamping and tensor plumbing.
// Convolutions lower to im2col + a dense GEMM.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "mavfi/autograd.hpp"
#include "mavfi/tensor.hpp"

namespace mavfi {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline int conv_out_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

/// cols[(c*k + ky)*k + kx, oy*ow + ox] = x[c, oy*stride - pad + ky, ox*stride - pad + kx] (0 outside).
template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, int oh, int ow, T* cols) {
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= H) {
            std::fill_n(dst, ow, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
}

/// Adjoint of im2col: scatter-add columns back into x.
template <class T>
void col2im(const T* cols, int C, int H, int W, int k, int stride, int pad, int oh, int ow, T* x) {
  const std::size_t n = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(c * k + ky) * k + kx) * n;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = x + (static_cast<std::size_t>(c) * H + iy) * W;
          const T* src = row + static_cast<std::size_t>(oy) * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace detail

namespace ag {

/// 2-D convolution. weight [Cout, Cin, k, k], bias [Cout], zero padding.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  expect(wv.rank() == 4 && wv.dim(2) == wv.dim(3), "conv2d: weight must be [Cout,Cin,k,k]");
  const int cout = wv.dim(0), cin = wv.dim(1), k = wv.dim(2);
  expect(xv.rank() == 3 && xv.channels() == cin, "conv2d: expected ", cin, " input channels, got ",
         shape_str(xv.shape()));
  expect(bias.value().size() == static_cast<std::size_t>(cout), "conv2d: bias has ", bias.value().size(),
         " entries for ", cout, " output channels");
  const int H = xv.height(), W = xv.width();
  const int oh = mavfi::detail::conv_out_extent(H, k, stride, pad), ow = mavfi::detail::conv_out_extent(W, k, stride, pad);
  expect(oh > 0 && ow > 0, "conv2d: input ", H, "x", W, " too small for kernel ", k);
  const int kk = cin * k * k;
  const int n = oh * ow;

  AlignedVector<T> cols(static_cast<std::size_t>(kk) * n);
  mavfi::detail::im2col(xv.data(), cin, H, W, k, stride, pad, oh, ow, cols.data());
  Tensor<T> out(cout, oh, ow);
  mavfi::detail::MapMat<T> om(out.data(), cout, n);
  om.noalias() = mavfi::detail::CMapMat<T>(wv.data(), cout, kk) * mavfi::detail::CMapMat<T>(cols.data(), kk, n);
  for (int c = 0; c < cout; ++c) om.row(c).array() += bias.value()[c];

  return record<T>(std::move(out), {x, weight, bias},
                   [cols = std::move(cols), cin, cout, k, kk, n, H, W, oh, ow, stride, pad](Node<T>& nd) {
                     mavfi::detail::CMapMat<T> g(nd.grad.data(), cout, n);
                     mavfi::detail::CMapMat<T> cm(cols.data(), kk, n);
                     if (nd.parent_needs(1)) {
                       mavfi::detail::MapMat<T> gw(nd.parent_grad(1).data(), cout, kk);
                       gw.noalias() += g * cm.transpose();
                     }
                     if (nd.parent_needs(2)) {
                       auto& gb = nd.parent_grad(2);
                       for (int c = 0; c < cout; ++c) gb[c] += g.row(c).sum();
                     }
                     if (nd.parent_needs(0)) {
                       AlignedVector<T> dcols(static_cast<std::size_t>(kk) * n);
                       mavfi::detail::MapMat<T> dc(dcols.data(), kk, n);
                       dc.noalias() = mavfi::detail::CMapMat<T>(nd.parents[1]->value.data(), cout, kk).transpose() * g;
                       mavfi::detail::col2im(dcols.data(), cin, H, W, k, stride, pad, oh, ow, nd.parent_grad(0).data());
                     }
                   });
}

/// Transposed convolution. weight [Cin, Cout, k, k]; output extent (in-1)*stride - 2*pad + k.
template <class T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  expect(wv.rank() == 4 && wv.dim(2) == wv.dim(3), "conv_transpose2d: weight must be [Cin,Cout,k,k]");
  const int cin = wv.dim(0), cout = wv.dim(1), k = wv.dim(2);
  expect(xv.rank() == 3 && xv.channels() == cin, "conv_transpose2d: expected ", cin, " input channels, got ",
         shape_str(xv.shape()));
  expect(bias.value().size() == static_cast<std::size_t>(cout), "conv_transpose2d: bias has ", bias.value().size(),
         " entries for ", cout, " output channels");
  const int H = xv.height(), W = xv.width();
  const int oh = (H - 1) * stride - 2 * pad + k, ow = (W - 1) * stride - 2 * pad + k;
  const int kk = cout * k * k;
  const int n = H * W;

  AlignedVector<T> cols(static_cast<std::size_t>(kk) * n);
  mavfi::detail::MapMat<T> cm(cols.data(), kk, n);
  cm.noalias() = mavfi::detail::CMapMat<T>(wv.data(), cin, kk).transpose() * mavfi::detail::CMapMat<T>(xv.data(), cin, n);
  Tensor<T> out(cout, oh, ow);
  mavfi::detail::col2im(cols.data(), cout, oh, ow, k, stride, pad, H, W, out.data());
  for (int c = 0; c < cout; ++c) {
    T* p = out.channel(c);
    for (std::size_t i = 0; i < out.plane(); ++i) p[i] += bias.value()[c];
  }

  return record<T>(std::move(out), {x, weight, bias},
                   [cin, cout, k, kk, n, H, W, oh, ow, stride, pad](Node<T>& nd) {
                     AlignedVector<T> dcols(static_cast<std::size_t>(kk) * n);
                     mavfi::detail::im2col(nd.grad.data(), cout, oh, ow, k, stride, pad, H, W, dcols.data());
                     mavfi::detail::CMapMat<T> dc(dcols.data(), kk, n);
                     if (nd.parent_needs(0)) {
                       mavfi::detail::MapMat<T> gx(nd.parent_grad(0).data(), cin, n);
                       gx.noalias() += mavfi::detail::CMapMat<T>(nd.parents[1]->value.data(), cin, kk) * dc;
                     }
                     if (nd.parent_needs(1)) {
                       mavfi::detail::MapMat<T> gw(nd.parent_grad(1).data(), cin, kk);
                       gw.noalias() += mavfi::detail::CMapMat<T>(nd.parents[0]->value.data(), cin, n) * dc.transpose();
                     }
                     if (nd.parent_needs(2)) {
                       auto& gb = nd.parent_grad(2);
                       const std::size_t P = static_cast<std::size_t>(oh) * ow;
                       for (int c = 0; c < cout; ++c) {
                         const T* g = nd.grad.channel(c);
                         T s = 0;
                         for (std::size_t i = 0; i < P; ++i) s += g[i];
                         gb[c] += s;
                       }
                     }
                   });
}

/// Channel-wise PReLU: x for x > 0, slope[c] * x otherwise.
template <class T>
Var<T> prelu(const Var<T>& x, const Var<T>& slope) {
  const auto& xv = x.value();
  expect(slope.value().size() == static_cast<std::size_t>(xv.channels()), "prelu: slope count ",
         slope.value().size(), " != channels ", xv.channels());
  Tensor<T> out(xv.shape());
  const std::size_t P = xv.plane();
  for (int c = 0; c < xv.channels(); ++c) {
    const T a = slope.value()[c];
    const T* s = xv.channel(c);
    T* d = out.channel(c);
    for (std::size_t i = 0; i < P; ++i) d[i] = s[i] > 0 ? s[i] : a * s[i];
  }
  return record<T>(std::move(out), {x, slope}, [](Node<T>& nd) {
    const auto& xv = nd.parents[0]->value;
    const auto& av = nd.parents[1]->value;
    const std::size_t P = xv.plane();
    for (int c = 0; c < xv.channels(); ++c) {
      const T* s = xv.channel(c);
      const T* g = nd.grad.channel(c);
      if (nd.parent_needs(0)) {
        T* d = nd.parent_grad(0).channel(c);
        for (std::size_t i = 0; i < P; ++i) d[i] += s[i] > 0 ? g[i] : av[c] * g[i];
      }
      if (nd.parent_needs(1)) {
        T acc = 0;
        for (std::size_t i = 0; i < P; ++i)
          if (!(s[i] > 0)) acc += g[i] * s[i];
        nd.parent_grad(1)[c] += acc;
      }
    }
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  auto out = map(x.value(), [](T v) { return T(1) / (T(1) + std::exp(-v)); });
  return record<T>(std::move(out), {x}, [](Node<T>& nd) {
    auto& d = nd.parent_grad(0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T s = nd.value[i];
      d[i] += nd.grad[i] * s * (1 - s);
    }
  });
}

/// Clamp to [lo, hi]; gradient passes where lo <= x <= hi.
template <class T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  auto out = map(x.value(), [=](T v) { return std::clamp(v, lo, hi); });
  return record<T>(std::move(out), {x}, [lo, hi](Node<T>& nd) {
    const auto& xv = nd.parents[0]->value;
    auto& d = nd.parent_grad(0);
    for (std::size_t i = 0; i < d.size(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) d[i] += nd.grad[i];
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  auto out = zip(a.value(), b.value(), [](T p, T q) { return p + q; });
  return record<T>(std::move(out), {a, b}, [](Node<T>& nd) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!nd.parent_needs(k)) continue;
      auto& d = nd.parent_grad(k);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += nd.grad[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  auto out = map(a.value(), [s](T v) { return v * s; });
  return record<T>(std::move(out), {a}, [s](Node<T>& nd) {
    auto& d = nd.parent_grad(0);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += nd.grad[i] * s;
  });
}

template <class T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  std::vector<const Tensor<T>*> vals;
  for (const auto& p : parts) vals.push_back(&p.value());
  auto out = mavfi::concat_channels(vals);
  return record<T>(std::move(out), parts, [](Node<T>& nd) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < nd.parents.size(); ++k) {
      const std::size_t len = nd.parents[k]->value.size();
      if (nd.parent_needs(k)) {
        auto& d = nd.parent_grad(k);
        for (std::size_t i = 0; i < len; ++i) d[i] += nd.grad[offset + i];
      }
      offset += len;
    }
  });
}

template <class T>
Var<T> slice_channels(const Var<T>& x, int first, int count) {
  auto out = mavfi::slice_channels(x.value(), first, count);
  return record<T>(std::move(out), {x}, [first](Node<T>& nd) {
    if (!nd.parent_needs(0)) return;
    auto& d = nd.parent_grad(0);
    T* dst = d.channel(first);
    for (std::size_t i = 0; i < nd.grad.size(); ++i) dst[i] += nd.grad[i];
  });
}

/// Sum of weighted scalar nodes (each of shape [1]).
template <class T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  expect(terms.size() == weights.size(), "weighted_sum: ", terms.size(), " terms vs ", weights.size(), " weights");
  T total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    expect(terms[i].value().size() == 1, "weighted_sum: term ", i, " is not a scalar");
    total += weights[i] * terms[i].item();
  }
  return record<T>(Tensor<T>(Shape{1}, total), terms, [weights](Node<T>& nd) {
    for (std::size_t k = 0; k < nd.parents.size(); ++k)
      if (nd.parent_needs(k)) nd.parent_grad(k)[0] += weights[k] * nd.grad[0];
  });
}

}  // namespace ag
}  // namespace mavfi

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "mavfi/core_ops.hpp"

namespace mavfi {

/// PSNR reported for a zero-error pair.
inline constexpr double kPsnrCap = 99.0;

template <class T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape(a, b, "mse");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

/// 10 log10(1 / MSE) on the [0,1] scale, capped at kPsnrCap.
template <class T>
double psnr(const Frame<T>& pred, const Frame<T>& gt) {
  const double m = mse(pred.tensor(), gt.tensor());
  if (m <= 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

/// RMS difference on the 0..255 scale.
template <class T>
double interpolation_error(const Frame<T>& pred, const Frame<T>& gt) {
  return 255.0 * std::sqrt(mse(pred.tensor(), gt.tensor()));
}

/// Mean per-pixel Euclidean norm of the flow difference.
template <class T>
double epe(const FlowField<T>& pred, const FlowField<T>& gt) {
  expect_same_shape(pred.tensor(), gt.tensor(), "epe");
  const std::size_t P = pred.tensor().plane();
  double s = 0;
  for (std::size_t i = 0; i < P; ++i) {
    const double du = static_cast<double>(pred.tensor().channel(0)[i]) - gt.tensor().channel(0)[i];
    const double dv = static_cast<double>(pred.tensor().channel(1)[i]) - gt.tensor().channel(1)[i];
    s += std::sqrt(du * du + dv * dv);
  }
  return s / static_cast<double>(P);
}

namespace detail {

inline std::array<double, 11> ssim_window() {
  std::array<double, 11> w{};
  double sum = 0;
  for (int i = 0; i < 11; ++i) {
    const double d = i - 5;
    w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * 1.5 * 1.5));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= sum;
  return w;
}

/// Separable 'valid' filtering of an H x W plane with the 11-tap window.
inline std::vector<double> ssim_filter(const std::vector<double>& p, int H, int W) {
  static const auto w = ssim_window();
  const int oh = H - 10, ow = W - 10;
  std::vector<double> rows(static_cast<std::size_t>(H) * ow);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < 11; ++k) s += w[static_cast<std::size_t>(k)] * p[static_cast<std::size_t>(y) * W + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < 11; ++k) s += w[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace detail

/// Windowed SSIM: 11x11 Gaussian (sigma 1.5), K1 = 0.01, K2 = 0.03, range 1,
/// valid windows only, averaged over channels and window positions.
template <class T>
double ssim(const Frame<T>& pred, const Frame<T>& gt) {
  const auto& a = pred.tensor();
  const auto& b = gt.tensor();
  expect_same_shape(a, b, "ssim");
  const int H = a.height(), W = a.width();
  expect(H >= 11 && W >= 11, "ssim: frames must be at least 11x11, got ", H, "x", W);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const std::size_t P = a.plane();
  double total = 0;
  std::size_t count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    std::vector<double> x(P), y(P), xx(P), yy(P), xy(P);
    for (std::size_t i = 0; i < P; ++i) {
      x[i] = a.channel(c)[i];
      y[i] = b.channel(c)[i];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::ssim_filter(x, H, W), my = detail::ssim_filter(y, H, W);
    const auto sxx = detail::ssim_filter(xx, H, W), syy = detail::ssim_filter(yy, H, W);
    const auto sxy = detail::ssim_filter(xy, H, W);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace mavfi

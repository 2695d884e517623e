// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mavfi/error.hpp"

namespace mavfi {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

/// Cache-line aligned storage. Vectorized GEMM kernels pick their code path
/// from pointer alignment, so a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major array. Activations use the [C, H, W] layout.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    for (int d : shape_) expect(d >= 0, "negative tensor extent in ", shape_str(shape_));
    data_.assign(shape_numel(shape_), fill);
  }
  Tensor(int c, int h, int w, T fill = T(0)) : Tensor(Shape{c, h, w}, fill) {}
  Tensor(Shape shape, const std::vector<T>& values) : shape_(std::move(shape)), data_(values.begin(), values.end()) {
    expect(data_.size() == shape_numel(shape_), "tensor payload of ", data_.size(),
           " values does not fill shape ", shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  std::size_t plane() const { return static_cast<std::size_t>(height()) * width(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int c, int y, int x) { return data_[(static_cast<std::size_t>(c) * height() + y) * width() + x]; }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height() + y) * width() + x];
  }

  T* channel(int c) { return data_.data() + static_cast<std::size_t>(c) * plane(); }
  const T* channel(int c) const { return data_.data() + static_cast<std::size_t>(c) * plane(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

template <class T>
bool same_hw(const Tensor<T>& a, const Tensor<T>& b) {
  return a.rank() == 3 && b.rank() == 3 && a.height() == b.height() && a.width() == b.width();
}

template <class T>
void expect_same_hw(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  expect(same_hw(a, b), op, ": resolution mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

template <class T>
void expect_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  expect(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

template <class T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(v); });
}

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape(a, b, "max_abs_diff");
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Element-wise map into a fresh tensor of the same shape.
template <class T, class F>
Tensor<T> map(const Tensor<T>& a, F&& f) {
  Tensor<T> out(a.shape());
  std::transform(a.values().begin(), a.values().end(), out.data(), std::forward<F>(f));
  return out;
}

template <class T, class F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
  expect_same_shape(a, b, "zip");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

/// Copy channels [first, first + count) of a [C,H,W] tensor.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, int first, int count) {
  expect(x.rank() == 3, "slice_channels: expected a [C,H,W] tensor, got ", shape_str(x.shape()));
  expect(first >= 0 && count >= 0 && first + count <= x.channels(), "slice_channels: [", first, ", ",
         first + count, ") outside ", x.channels(), " channels");
  Tensor<T> out(count, x.height(), x.width());
  std::copy_n(x.channel(first), static_cast<std::size_t>(count) * x.plane(), out.data());
  return out;
}

template <class T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  expect(!parts.empty(), "concat_channels: no inputs");
  int c = 0;
  for (const auto* p : parts) {
    expect_same_hw(*parts.front(), *p, "concat_channels");
    c += p->channels();
  }
  Tensor<T> out(c, parts.front()->height(), parts.front()->width());
  T* dst = out.data();
  for (const auto* p : parts) dst = std::copy(p->values().begin(), p->values().end(), dst);
  return out;
}

/// Replicate-pad a [C,H,W] tensor on the bottom/right edge.
template <class T>
Tensor<T> pad_replicate(const Tensor<T>& x, int new_h, int new_w) {
  expect(new_h >= x.height() && new_w >= x.width(), "pad_replicate: target smaller than input");
  Tensor<T> out(x.channels(), new_h, new_w);
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < new_h; ++y)
      for (int xx = 0; xx < new_w; ++xx)
        out.at(c, y, xx) = x.at(c, std::min(y, x.height() - 1), std::min(xx, x.width() - 1));
  return out;
}

template <class T>
Tensor<T> crop(const Tensor<T>& x, int h, int w) {
  expect(h <= x.height() && w <= x.width(), "crop: target larger than input");
  Tensor<T> out(x.channels(), h, w);
  for (int c = 0; c < x.channels(); ++c)
    for (int y = 0; y < h; ++y) std::copy_n(&x.at(c, y, 0), w, &out.at(c, y, 0));
  return out;
}

}  // namespace mavfi

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "deblurflow/core/error.hpp"

namespace deblurflow {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const Mat<T>>;

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;

  long numel() const { return static_cast<long>(c) * h * w; }
  friend bool operator==(const Shape&, const Shape&) = default;
  std::string str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Dense channel-major (C, H, W) array. Images, feature maps and latents all
/// use this layout; `matrix()` views it as C x (H*W) for GEMM-based layers.
template <typename T>
class Tensor3 {
 public:
  using value_type = T;

  Tensor3() = default;
  explicit Tensor3(Shape s, T fill = T(0)) : shape_(s), data_(static_cast<size_t>(s.numel()), fill) {
    require(s.c >= 0 && s.h >= 0 && s.w >= 0, "negative tensor dimension");
  }
  Tensor3(int c, int h, int w, T fill = T(0)) : Tensor3(Shape{c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.c; }
  int height() const { return shape_.h; }
  int width() const { return shape_.w; }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }
  T& operator[](long i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](long i) const { return data_[static_cast<size_t>(i)]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  MatMap<T> matrix() { return MatMap<T>(data_.data(), shape_.c, static_cast<long>(shape_.h) * shape_.w); }
  ConstMatMap<T> matrix() const {
    return ConstMatMap<T>(data_.data(), shape_.c, static_cast<long>(shape_.h) * shape_.w);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor3<U> cast() const {
    Tensor3<U> out(shape_);
    for (long i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[static_cast<size_t>(i)]);
    return out;
  }

  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  size_t index(int c, int y, int x) const {
    return (static_cast<size_t>(c) * shape_.h + y) * shape_.w + x;
  }

  Shape shape_{};
  std::vector<T, Eigen::aligned_allocator<T>> data_;
};

/// Images are (C, H, W) doubles in [0, 1]; residuals are signed.
using Image = Tensor3<double>;

template <typename T>
bool all_finite(const Tensor3<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_same_shape(const Tensor3<T>& a, const Tensor3<T>& b, const char* what) {
  if (!(a.shape() == b.shape()))
    throw InvalidArgument(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

template <typename T>
Tensor3<T> operator-(const Tensor3<T>& a, const Tensor3<T>& b) {
  require_same_shape(a, b, "subtract");
  Tensor3<T> out(a.shape());
  for (long i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

template <typename T>
Tensor3<T> operator+(const Tensor3<T>& a, const Tensor3<T>& b) {
  require_same_shape(a, b, "add");
  Tensor3<T> out(a.shape());
  for (long i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor3<T> operator*(T s, const Tensor3<T>& a) {
  Tensor3<T> out(a.shape());
  for (long i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

template <typename T>
Tensor3<T> clip01(Tensor3<T> a) {
  for (auto& v : a.values()) v = std::clamp(v, T(0), T(1));
  return a;
}

template <typename T>
T max_abs_diff(const Tensor3<T>& a, const Tensor3<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  T m = 0;
  for (long i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Stacks `a` and `b` along the channel axis.
template <typename T>
Tensor3<T> concat_channels(const Tensor3<T>& a, const Tensor3<T>& b) {
  require(a.height() == b.height() && a.width() == b.width(), "concat_channels: spatial mismatch");
  Tensor3<T> out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

/// Reflect (mirror without edge repeat) index into [0, n).
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

/// Pads bottom/right so spatial dims become (h, w), mirroring content.
template <typename T>
Tensor3<T> reflect_pad_to(const Tensor3<T>& a, int h, int w) {
  require(h >= a.height() && w >= a.width(), "reflect_pad_to: target smaller than input");
  if (h == a.height() && w == a.width()) return a;
  Tensor3<T> out(a.channels(), h, w);
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = a(c, reflect_index(y, a.height()), reflect_index(x, a.width()));
  return out;
}

template <typename T>
Tensor3<T> crop(const Tensor3<T>& a, int y0, int x0, int h, int w) {
  require(y0 >= 0 && x0 >= 0 && y0 + h <= a.height() && x0 + w <= a.width(), "crop out of bounds");
  Tensor3<T> out(a.channels(), h, w);
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out(c, y, x) = a(c, y0 + y, x0 + x);
  return out;
}

/// Channels [c0, c0 + n) of `a`.
template <typename T>
Tensor3<T> slice_channels(const Tensor3<T>& a, int c0, int n) {
  require(c0 >= 0 && n >= 0 && c0 + n <= a.channels(), "slice_channels out of range");
  Tensor3<T> out(n, a.height(), a.width());
  const long plane = static_cast<long>(a.height()) * a.width();
  std::copy(a.data() + c0 * plane, a.data() + (c0 + n) * plane, out.data());
  return out;
}

/// Places `a` at the top-left of a zero tensor of spatial size (h, w).
template <typename T>
Tensor3<T> zero_pad_to(const Tensor3<T>& a, int h, int w) {
  require(h >= a.height() && w >= a.width(), "zero_pad_to: target smaller than input");
  if (h == a.height() && w == a.width()) return a;
  Tensor3<T> out(a.channels(), h, w);
  for (int c = 0; c < a.channels(); ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) out(c, y, x) = a(c, y, x);
  return out;
}

}  // namespace deblurflow

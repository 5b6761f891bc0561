#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "deblurflow/core/rng.hpp"
#include "deblurflow/core/tensor.hpp"

// Layers used by the vector-field network, the latent codecs and the toy
// restorer. Each layer caches what its backward pass needs from the most
// recent forward call, so one layer instance serves one example at a time.
// Parameter gradients accumulate (+=) and only when `trainable` is set.

namespace deblurflow::nn {

template <typename T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool trainable = true;

  void init(std::string n, long rows, long cols) {
    name = std::move(n);
    value = Mat<T>::Zero(rows, cols);
    grad = Mat<T>::Zero(rows, cols);
  }
  long numel() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

template <typename T>
void fill_uniform(Mat<T>& m, double bound, Rng& rng) {
  for (long i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Token-wise affine map: (N x in) -> (N x out).
template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng, bool bias = true) : has_bias_(bias) {
    weight.init(name + ".weight", out, in);
    fill_uniform(weight.value, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    if (bias) {
      this->bias.init(name + ".bias", 1, out);
      fill_uniform(this->bias.value, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    }
  }

  int in_features() const { return static_cast<int>(weight.value.cols()); }
  int out_features() const { return static_cast<int>(weight.value.rows()); }

  Mat<T> forward(const Mat<T>& x) {
    input_ = x;
    Mat<T> y = x * weight.value.transpose();
    if (has_bias_) y.rowwise() += bias.value.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    if (weight.trainable) weight.grad.noalias() += dy.transpose() * input_;
    if (has_bias_ && bias.trainable) bias.grad.row(0) += dy.colwise().sum();
    return dy * weight.value;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    if (has_bias_) out.push_back(&bias);
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  bool has_bias_ = true;
  Mat<T> input_;
};

/// 2D convolution on (C, H, W) tensors via im2col + GEMM.
/// Zero padding; output size is floor((H + 2p - k) / s) + 1.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int k, int stride, int pad, Rng& rng)
      : in_(in), out_(out), k_(k), stride_(stride), pad_(pad) {
    weight.init(name + ".weight", out, static_cast<long>(in) * k * k);
    bias.init(name + ".bias", out, 1);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in) * k * k);
    fill_uniform(weight.value, bound, rng);
    fill_uniform(bias.value, bound, rng);
  }

  static Conv2d same(const std::string& name, int in, int out, int k, Rng& rng) { return Conv2d(name, in, out, k, 1, k / 2, rng); }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }
  int pad() const { return pad_; }

  Shape output_shape(Shape in) const {
    return {out_, (in.h + 2 * pad_ - k_) / stride_ + 1, (in.w + 2 * pad_ - k_) / stride_ + 1};
  }

  void zero_init() {
    weight.value.setZero();
    bias.value.setZero();
  }

  Tensor3<T> forward(const Tensor3<T>& x) {
    require(x.channels() == in_, weight.name + ": expected " + std::to_string(in_) + " input channels, got " +
                                     std::to_string(x.channels()));
    in_shape_ = x.shape();
    const Shape os = output_shape(x.shape());
    Tensor3<T> y(os);
    if (pointwise()) {
      input_ = x;
      y.matrix().noalias() = weight.value * x.matrix();
    } else {
      im2col(x, os);
      y.matrix().noalias() = weight.value * cols_;
    }
    y.matrix().colwise() += bias.value.col(0);
    return y;
  }

  /// Returns dL/dx unless `need_input_grad` is false (then an empty tensor).
  Tensor3<T> backward(const Tensor3<T>& dy, bool need_input_grad = true) {
    const auto g = dy.matrix();
    if (weight.trainable) {
      if (pointwise()) weight.grad.noalias() += g * input_.matrix().transpose();
      else weight.grad.noalias() += g * cols_.transpose();
    }
    if (bias.trainable) bias.grad.col(0) += g.rowwise().sum();
    if (!need_input_grad) return {};
    Tensor3<T> dx(in_shape_);
    if (pointwise()) {
      dx.matrix().noalias() = weight.value.transpose() * g;
    } else {
      Mat<T> dcols = weight.value.transpose() * g;
      col2im(dcols, dy.shape(), dx);
    }
    return dx;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  void im2col(const Tensor3<T>& x, Shape os) {
    cols_.resize(static_cast<long>(in_) * k_ * k_, static_cast<long>(os.h) * os.w);
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* row = cols_.row((static_cast<long>(c) * k_ + ky) * k_ + kx).data();
          for (int oy = 0; oy < os.h; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            T* dst = row + static_cast<long>(oy) * os.w;
            if (iy < 0 || iy >= x.height()) {
              std::fill(dst, dst + os.w, T(0));
              continue;
            }
            for (int ox = 0; ox < os.w; ++ox) {
              const int ix = ox * stride_ + kx - pad_;
              dst[ox] = (ix < 0 || ix >= x.width()) ? T(0) : x(c, iy, ix);
            }
          }
        }
  }

  void col2im(const Mat<T>& dcols, Shape os, Tensor3<T>& dx) const {
    dx.fill(T(0));
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* row = dcols.row((static_cast<long>(c) * k_ + ky) * k_ + kx).data();
          for (int oy = 0; oy < os.h; ++oy) {
            const int iy = oy * stride_ + ky - pad_;
            if (iy < 0 || iy >= dx.height()) continue;
            const T* src = row + static_cast<long>(oy) * os.w;
            for (int ox = 0; ox < os.w; ++ox) {
              const int ix = ox * stride_ + kx - pad_;
              if (ix >= 0 && ix < dx.width()) dx(c, iy, ix) += src[ox];
            }
          }
        }
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Shape in_shape_{};
  Tensor3<T> input_;
  Mat<T> cols_;
};

/// x * sigmoid(x), elementwise. Smooth, and maps 0 to 0.
template <typename T>
class SiLU {
 public:
  template <typename Arr>
  Arr forward(const Arr& x) {
    input_.assign(x.data(), x.data() + x.size());
    Arr y = x;
    for (long i = 0; i < y.size(); ++i) y.data()[i] = x.data()[i] * sigmoid(x.data()[i]);
    return y;
  }
  template <typename Arr>
  Arr backward(const Arr& dy) {
    Arr dx = dy;
    for (long i = 0; i < dx.size(); ++i) {
      const T s = sigmoid(input_[static_cast<size_t>(i)]);
      dx.data()[i] = dy.data()[i] * s * (T(1) + input_[static_cast<size_t>(i)] * (T(1) - s));
    }
    return dx;
  }

 private:
  std::vector<T> input_;
};

/// Per-token normalization over the feature axis with learned gain/shift.
template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, int dim) {
    gain.init(name + ".gain", 1, dim);
    gain.value.setOnes();
    shift.init(name + ".shift", 1, dim);
  }

  Mat<T> forward(const Mat<T>& x) {
    const long n = x.rows(), d = x.cols();
    xhat_.resize(n, d);
    inv_std_.resize(n);
    for (long i = 0; i < n; ++i) {
      const T mean = x.row(i).mean();
      const T var = (x.row(i).array() - mean).square().mean();
      inv_std_[i] = T(1) / std::sqrt(var + T(1e-5));
      xhat_.row(i) = (x.row(i).array() - mean) * inv_std_[i];
    }
    Mat<T> y = xhat_.array().rowwise() * gain.value.row(0).array();
    y.rowwise() += shift.value.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    if (gain.trainable) gain.grad.row(0) += (dy.array() * xhat_.array()).colwise().sum().matrix();
    if (shift.trainable) shift.grad.row(0) += dy.colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * gain.value.row(0).array();
    Mat<T> dx(dy.rows(), dy.cols());
    for (long i = 0; i < dy.rows(); ++i) {
      const T m1 = dxhat.row(i).mean();
      const T m2 = (dxhat.row(i).array() * xhat_.row(i).array()).mean();
      dx.row(i) = inv_std_[i] * (dxhat.row(i).array() - m1 - xhat_.row(i).array() * m2);
    }
    return dx;
  }

  void collect(ParamList<T>& out) {
    out.push_back(&gain);
    out.push_back(&shift);
  }

  Parameter<T> gain;
  Parameter<T> shift;

 private:
  Mat<T> xhat_;
  std::vector<T> inv_std_;
};

/// (C*r*r, H, W) -> (C, H*r, W*r).
template <typename T>
Tensor3<T> pixel_shuffle(const Tensor3<T>& x, int r) {
  require(x.channels() % (r * r) == 0, "pixel_shuffle: channels not divisible by r^2");
  const int c = x.channels() / (r * r);
  Tensor3<T> y(c, x.height() * r, x.width() * r);
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int yy = 0; yy < x.height(); ++yy)
          for (int xx = 0; xx < x.width(); ++xx) y(ch, yy * r + i, xx * r + j) = x(ch * r * r + i * r + j, yy, xx);
  return y;
}

/// Inverse of pixel_shuffle: (C, H, W) -> (C*r*r, H/r, W/r).
template <typename T>
Tensor3<T> pixel_unshuffle(const Tensor3<T>& x, int r) {
  require(x.height() % r == 0 && x.width() % r == 0, "pixel_unshuffle: spatial dims not divisible by r");
  Tensor3<T> y(x.channels() * r * r, x.height() / r, x.width() / r);
  for (int ch = 0; ch < x.channels(); ++ch)
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        for (int yy = 0; yy < y.height(); ++yy)
          for (int xx = 0; xx < y.width(); ++xx) y(ch * r * r + i * r + j, yy, xx) = x(ch, yy * r + i, xx * r + j);
  return y;
}

/// x + conv(silu(conv(x))) at constant width.
template <typename T>
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(const std::string& name, int channels, Rng& rng)
      : conv1_(Conv2d<T>::same(name + ".conv1", channels, channels, 3, rng)),
        conv2_(Conv2d<T>::same(name + ".conv2", channels, channels, 3, rng)) {}

  Tensor3<T> forward(const Tensor3<T>& x) { return x + conv2_.forward(act_.forward(conv1_.forward(x))); }

  Tensor3<T> backward(const Tensor3<T>& dy) {
    Tensor3<T> d = conv1_.backward(act_.backward(conv2_.backward(dy)));
    return d + dy;
  }

  void collect(ParamList<T>& out) {
    conv1_.collect(out);
    conv2_.collect(out);
  }

  const Conv2d<T>& conv1() const { return conv1_; }
  const Conv2d<T>& conv2() const { return conv2_; }

 private:
  Conv2d<T> conv1_, conv2_;
  SiLU<T> act_;
};

template <typename T>
long count_params(const ParamList<T>& ps) {
  long n = 0;
  for (const auto* p : ps) n += p->numel();
  return n;
}

template <typename T>
void zero_grads(const ParamList<T>& ps) {
  for (auto* p : ps) p->zero_grad();
}

}  // namespace deblurflow::nn

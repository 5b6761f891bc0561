#pragma once

#include <cmath>
#include <vector>

#include "deblurflow/core/tensor.hpp"

namespace deblurflow::eval {

constexpr double kPsnrCap = 100.0;

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "metric");
  double acc = 0;
  for (long i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// 10 log10(max_val^2 / MSE), capped at 100 dB once MSE drops below 1e-10.
inline double psnr(const Image& a, const Image& b, double max_val = 1.0) {
  if (!(max_val > 0)) throw InvalidArgument("psnr: max_val must be positive");
  const double m = mse(a, b);
  if (m < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / m));
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(int n, double sigma) {
  std::vector<double> g(static_cast<size_t>(n));
  double sum = 0;
  for (int i = 0; i < n; ++i) {
    const double d = i - (n - 1) / 2.0;
    sum += g[static_cast<size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable 'valid' filtering of one H x W plane.
inline std::vector<double> filter_valid(const double* p, int h, int w, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size()), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<size_t>(h) * ow), out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < n; ++k) acc += g[static_cast<size_t>(k)] * p[static_cast<long>(y) * w + x + k];
      rows[static_cast<size_t>(y) * ow + x] = acc;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < n; ++k) acc += g[static_cast<size_t>(k)] * rows[static_cast<size_t>(y + k) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Gaussian-window SSIM, computed per channel over the fully covered region
/// and averaged across channels.
inline double ssim(const Image& a, const Image& b, const SsimParams& prm = {}) {
  require_same_shape(a, b, "ssim");
  if (a.height() < prm.window || a.width() < prm.window)
    throw InvalidArgument("ssim: image " + a.shape().str() + " smaller than the " + std::to_string(prm.window) + "px window");
  const double c1 = std::pow(prm.k1 * prm.data_range, 2), c2 = std::pow(prm.k2 * prm.data_range, 2);
  const auto g = detail::gaussian_window(prm.window, prm.sigma);
  const int h = a.height(), w = a.width();
  const long plane = static_cast<long>(h) * w;
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const double* pa = a.data() + c * plane;
    const double* pb = b.data() + c * plane;
    std::vector<double> aa(static_cast<size_t>(plane)), bb(aa.size()), ab(aa.size());
    for (long i = 0; i < plane; ++i) {
      aa[static_cast<size_t>(i)] = pa[i] * pa[i];
      bb[static_cast<size_t>(i)] = pb[i] * pb[i];
      ab[static_cast<size_t>(i)] = pa[i] * pb[i];
    }
    const auto mu_a = detail::filter_valid(pa, h, w, g), mu_b = detail::filter_valid(pb, h, w, g);
    const auto s_aa = detail::filter_valid(aa.data(), h, w, g), s_bb = detail::filter_valid(bb.data(), h, w, g),
               s_ab = detail::filter_valid(ab.data(), h, w, g);
    double acc = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(mu_a.size());
  }
  return total / a.channels();
}

}  // namespace deblurflow::eval

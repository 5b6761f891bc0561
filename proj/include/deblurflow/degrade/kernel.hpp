#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "deblurflow/core/error.hpp"
#include "deblurflow/core/rng.hpp"

namespace deblurflow::degrade {

enum class KernelKind { kLinearMotion, kRandomWalk, kGaussian };

inline std::string to_string(KernelKind k) {
  switch (k) {
    case KernelKind::kLinearMotion: return "linear";
    case KernelKind::kRandomWalk: return "random-walk";
    case KernelKind::kGaussian: return "gaussian";
  }
  return "?";
}

inline KernelKind parse_kernel_kind(const std::string& s) {
  if (s == "linear" || s == "linear-motion") return KernelKind::kLinearMotion;
  if (s == "random-walk") return KernelKind::kRandomWalk;
  if (s == "gaussian") return KernelKind::kGaussian;
  throw InvalidArgument("unknown kernel kind: " + s);
}

/// Normalized, non-negative K x K blur kernel with K odd.
struct BlurKernel {
  int size = 1;
  KernelKind kind = KernelKind::kLinearMotion;
  std::uint64_t seed = 0;
  std::vector<double> weights{1.0};  // row-major

  double operator()(int row, int col) const { return weights[static_cast<size_t>(row) * size + col]; }
  int radius() const { return size / 2; }
};

namespace detail {

inline void splat(std::vector<double>& w, int k, double r, double c) {
  const int r0 = static_cast<int>(std::floor(r));
  const int c0 = static_cast<int>(std::floor(c));
  const double fr = r - r0, fc = c - c0;
  auto add = [&](int rr, int cc, double v) {
    if (rr >= 0 && rr < k && cc >= 0 && cc < k) w[static_cast<size_t>(rr) * k + cc] += v;
  };
  add(r0, c0, (1 - fr) * (1 - fc));
  add(r0, c0 + 1, (1 - fr) * fc);
  add(r0 + 1, c0, fr * (1 - fc));
  add(r0 + 1, c0 + 1, fr * fc);
}

inline void normalize(std::vector<double>& w) {
  double s = 0;
  for (double v : w) s += v;
  if (s <= 0) {
    std::fill(w.begin(), w.end(), 0.0);
    w[w.size() / 2] = 1.0;
    return;
  }
  for (double& v : w) v /= s;
}

}  // namespace detail

/// Builds a blur kernel. `extent` is the trajectory length in pixels for the
/// motion kinds and roughly 4 sigma for the gaussian kind.
inline BlurKernel make_kernel(KernelKind kind, int size, double extent, std::uint64_t seed) {
  if (size < 1 || size % 2 == 0) throw InvalidArgument("kernel size must be odd and >= 1, got " + std::to_string(size));
  if (extent < 0 || extent > size) throw InvalidArgument("kernel extent must lie in [0, K]");
  BlurKernel k;
  k.size = size;
  k.kind = kind;
  k.seed = seed;
  k.weights.assign(static_cast<size_t>(size) * size, 0.0);
  const double center = size / 2;
  if (size == 1 || extent == 0) {
    k.weights[k.weights.size() / 2] = 1.0;
    return k;
  }
  Rng rng(seed);
  switch (kind) {
    case KernelKind::kLinearMotion: {
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double half = 0.5 * (extent - 1.0);
      const int samples = std::max(2, static_cast<int>(8 * extent));
      for (int i = 0; i < samples; ++i) {
        const double s = -half + 2.0 * half * i / (samples - 1);
        detail::splat(k.weights, size, center + s * std::sin(angle), center + s * std::cos(angle));
      }
      break;
    }
    case KernelKind::kRandomWalk: {
      // Momentum walk of total length `extent`, recentered on its centroid.
      const double step = 0.25;
      const int steps = std::max(1, static_cast<int>(extent / step));
      double heading = rng.uniform(0.0, 2 * std::numbers::pi);
      std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
      for (int i = 0; i < steps; ++i) {
        heading += rng.normal(0.0, 0.35);
        pts.emplace_back(pts.back().first + step * std::sin(heading), pts.back().second + step * std::cos(heading));
      }
      double mr = 0, mc = 0;
      for (auto [r, c] : pts) mr += r, mc += c;
      mr /= pts.size();
      mc /= pts.size();
      for (auto [r, c] : pts) {
        const double rr = std::clamp(center + r - mr, 0.0, size - 1.0);
        const double cc = std::clamp(center + c - mc, 0.0, size - 1.0);
        detail::splat(k.weights, size, rr, cc);
      }
      break;
    }
    case KernelKind::kGaussian: {
      const double sigma = extent / 4.0;
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
          const double d2 = (r - center) * (r - center) + (c - center) * (c - center);
          k.weights[static_cast<size_t>(r) * size + c] = std::exp(-d2 / (2 * sigma * sigma));
        }
      break;
    }
  }
  detail::normalize(k.weights);
  return k;
}

/// Kernel size/extent family used for dataset synthesis.
struct KernelSpec {
  std::vector<KernelKind> kinds{KernelKind::kLinearMotion, KernelKind::kRandomWalk};
  int size = 13;
  double min_extent = 5;
  double max_extent = 13;
};

/// Regenerates the kernel of one dataset item: extent and shape are pure
/// functions of (spec, kind, seed).
inline BlurKernel kernel_from_seed(const KernelSpec& spec, KernelKind kind, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "extent"));
  const double extent = spec.min_extent + (spec.max_extent - spec.min_extent) * rng.uniform();
  return make_kernel(kind, spec.size, std::min<double>(extent, spec.size), seed);
}

}  // namespace deblurflow::degrade

#pragma once

#include <algorithm>
#include <string>

#include "deblurflow/core/tensor.hpp"
#include "deblurflow/degrade/kernel.hpp"

namespace deblurflow::degrade {

enum class Boundary { kReflect, kReplicate };

inline Boundary parse_boundary(const std::string& s) {
  if (s == "reflect") return Boundary::kReflect;
  if (s == "replicate") return Boundary::kReplicate;
  throw InvalidArgument("unknown boundary mode: " + s);
}

/// y = x (*) k with the chosen boundary extension, no clipping. Linear in x.
inline Image convolve(const Image& x, const BlurKernel& k, Boundary boundary = Boundary::kReflect) {
  if (k.size > x.height() || k.size > x.width())
    throw InvalidArgument("kernel " + std::to_string(k.size) + " larger than image " + x.shape().str());
  const int r = k.radius();
  const int h = x.height(), w = x.width();
  auto src = [&](int i, int n) { return boundary == Boundary::kReflect ? reflect_index(i, n) : std::clamp(i, 0, n - 1); };
  Image y(x.shape());
  for (int c = 0; c < x.channels(); ++c)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double acc = 0;
        for (int a = 0; a < k.size; ++a) {
          const int si = src(i + r - a, h);
          for (int b = 0; b < k.size; ++b) acc += k(a, b) * x(c, si, src(j + r - b, w));
        }
        y(c, i, j) = acc;
      }
  return y;
}

inline Image apply_blur(const Image& x, const BlurKernel& k, Boundary boundary = Boundary::kReflect) {
  return clip01(convolve(x, k, boundary));
}

}  // namespace deblurflow::degrade

#pragma once

#include <cmath>
#include <vector>

#include "deblurflow/core/error.hpp"

namespace deblurflow::model {

/// Sinusoidal features of t in [0,1]: [sin(s t f_k)..., cos(s t f_k)...] with
/// f_k = 10000^(-k/half) and s = 1000, so neighboring grid times stay apart.
inline std::vector<double> time_embedding(double t, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw InvalidArgument("time embedding dim must be positive and even");
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("time must lie in [0,1]");
  const int half = dim / 2;
  std::vector<double> e(static_cast<size_t>(dim));
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e[static_cast<size_t>(k)] = std::sin(1000.0 * t * freq);
    e[static_cast<size_t>(half + k)] = std::cos(1000.0 * t * freq);
  }
  return e;
}

}  // namespace deblurflow::model

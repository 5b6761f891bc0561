#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "deblurflow/model/nn.hpp"

namespace testutil {

struct GradCheckResult {
  double worst_rel = 0;
  std::string worst_name;
  long checked = 0;
};

/// Compares accumulated analytic gradients in `params` against central
/// differences of `loss`. `loss` must run a full forward pass from the
/// current parameter values; `analytic` must zero and refill the gradients.
inline GradCheckResult grad_check(const deblurflow::nn::ParamList<double>& params, const std::function<double()>& loss,
                                  const std::function<void()>& analytic, double h = 1e-4, double floor = 1e-7) {
  analytic();
  GradCheckResult r;
  for (auto* p : params)
    for (long i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + h;
      const double lp = loss();
      w = saved - h;
      const double lm = loss();
      w = saved;
      const double num = (lp - lm) / (2 * h);
      const double ana = p->grad.data()[i];
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      if (rel > r.worst_rel) {
        r.worst_rel = rel;
        r.worst_name = p->name + "[" + std::to_string(i) + "]";
      }
      ++r.checked;
    }
  return r;
}

inline void randomize(const deblurflow::nn::ParamList<double>& params, deblurflow::Rng& rng, double scale = 0.5) {
  for (auto* p : params)
    for (long i = 0; i < p->value.size(); ++i) p->value.data()[i] = rng.uniform(-scale, scale);
}

}  // namespace testutil

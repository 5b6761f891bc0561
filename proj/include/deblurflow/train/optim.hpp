#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "deblurflow/model/nn.hpp"

namespace deblurflow::train {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.9;
  double weight_decay = 1e-3;
  double eps = 1e-8;
};

/// Decoupled-weight-decay Adam:
///   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
/// Parameters whose `trainable` flag is off are never touched.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  long steps() const { return step_; }

  void step(const nn::ParamList<T>& params, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto* p : params) {
      if (!p->trainable) continue;
      if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
        throw InvalidArgument("optimizer: gradient shape mismatch for " + p->name);
      auto& st = state_[p];
      if (st.m.size() == 0) {
        st.m = Mat<double>::Zero(p->value.rows(), p->value.cols());
        st.v = Mat<double>::Zero(p->value.rows(), p->value.cols());
      }
      for (long i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad.data()[i]);
        double& m = st.m.data()[i];
        double& v = st.v.data()[i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        const double mh = m / bc1, vh = v / bc2;
        const double w = static_cast<double>(p->value.data()[i]);
        p->value.data()[i] = static_cast<T>(w - lr * mh / (std::sqrt(vh) + cfg_.eps) - lr * cfg_.weight_decay * w);
      }
    }
  }

 private:
  struct State {
    Mat<double> m, v;
  };
  AdamWConfig cfg_;
  long step_ = 0;
  std::unordered_map<const nn::Parameter<T>*, State> state_;
};

/// Cosine annealing from lr0 at step 0 to floor_frac * lr0 at `total`.
inline double cosine_lr(double lr0, long step, long total, double floor_frac = 0.01) {
  if (total <= 0) return lr0;
  const double p = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  const double floor = floor_frac * lr0;
  return floor + (lr0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
}

/// Rescales trainable gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(const nn::ParamList<T>& params, double max_norm) {
  double sq = 0;
  for (const auto* p : params)
    if (p->trainable) sq += p->grad.template cast<double>().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T k = static_cast<T>(max_norm / norm);
    for (auto* p : params)
      if (p->trainable) p->grad *= k;
  }
  return norm;
}

}  // namespace deblurflow::train

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deblurflow/model/nn.hpp"

namespace deblurflow::model {

enum class LoraTarget { kQuery, kKey, kValue, kOutput };

inline const char* target_name(LoraTarget t) {
  switch (t) {
    case LoraTarget::kQuery: return "wq";
    case LoraTarget::kKey: return "wk";
    case LoraTarget::kValue: return "wv";
    case LoraTarget::kOutput: return "wo";
  }
  return "?";
}

struct LoraConfig {
  int rank = 4;
  double alpha = 8.0;
  std::vector<LoraTarget> targets{LoraTarget::kQuery, LoraTarget::kKey, LoraTarget::kValue, LoraTarget::kOutput};

  // rank 32 / alpha 64, the full-scale setting.
  static LoraConfig full_scale() { return {32, 64.0, {LoraTarget::kQuery, LoraTarget::kKey, LoraTarget::kValue, LoraTarget::kOutput}}; }
};

/// Low-rank update delta(x) = (alpha / rank) * B (A x). B starts at zero so a
/// fresh adapter leaves its host projection unchanged.
template <typename T>
class LoraAdapter {
 public:
  LoraAdapter(const std::string& name, int d_in, int d_out, int rank, double alpha, Rng& rng)
      : rank_(rank), alpha_(alpha), scale_(static_cast<T>(alpha / rank)) {
    require(rank >= 1, "LoRA rank must be >= 1");
    A.init(name + ".A", rank, d_in);
    nn::fill_uniform(A.value, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
    B.init(name + ".B", d_out, rank);
  }

  int rank() const { return rank_; }
  double alpha() const { return alpha_; }
  T scale() const { return scale_; }

  Mat<T> forward(const Mat<T>& x) {
    input_ = x;
    down_ = x * A.value.transpose();
    return scale_ * (down_ * B.value.transpose());
  }

  /// Returns the contribution of this adapter to dL/dx.
  Mat<T> backward(const Mat<T>& dy) {
    if (B.trainable) B.grad.noalias() += scale_ * (dy.transpose() * down_);
    Mat<T> ddown = scale_ * (dy * B.value);
    if (A.trainable) A.grad.noalias() += ddown.transpose() * input_;
    return ddown * A.value;
  }

  /// Dense (d_out x d_in) update folded into the host weight on merge.
  Mat<T> delta() const { return scale_ * (B.value * A.value); }

  void collect(nn::ParamList<T>& out) {
    out.push_back(&A);
    out.push_back(&B);
  }

  nn::Parameter<T> A;  // rank x d_in
  nn::Parameter<T> B;  // d_out x rank

 private:
  int rank_;
  double alpha_;
  T scale_;
  Mat<T> input_, down_;
};

/// Frozen-base linear projection with an optional adapter.
template <typename T>
class AdaptedProjection {
 public:
  AdaptedProjection() = default;
  AdaptedProjection(const std::string& name, int in, int out, Rng& rng) : base(name, in, out, rng) {}

  Mat<T> forward(const Mat<T>& x) {
    Mat<T> y = base.forward(x);
    if (adapter) y += adapter->forward(x);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    Mat<T> dx = base.backward(dy);
    if (adapter) dx += adapter->backward(dy);
    return dx;
  }

  void attach(const std::string& name, int rank, double alpha, Rng& rng) {
    adapter.emplace(name, base.in_features(), base.out_features(), rank, alpha, rng);
  }

  void merge() {
    if (!adapter) return;
    base.weight.value += adapter->delta();
    adapter.reset();
  }

  nn::Linear<T> base;
  std::optional<LoraAdapter<T>> adapter;
};

}  // namespace deblurflow::model

#pragma once

#include <cstdint>
#include <memory>

#include "deblurflow/core/checkpoint.hpp"
#include "deblurflow/expert/fidelity.hpp"
#include "deblurflow/flow/path.hpp"
#include "deblurflow/rspace/codec.hpp"

namespace deblurflow::expert {

/// Small U-Net restorer: the skip-connected codec with its latent passed
/// straight through predicts the blur residual, x_hat = y - D(E(y)).
class ToyRestorer {
 public:
  ToyRestorer(const rspace::CodecConfig& cfg, std::uint64_t seed) : codec_(cfg, seed, "expert") {}

  rspace::RSpaceCodec<float>& codec() { return codec_; }
  nn::ParamList<float> params() { return codec_.params(); }

  Tensor3<float> residual(const Tensor3<float>& y) {
    const auto s = codec_.encode(y);
    return codec_.decode(s.z, s);
  }

  Image restore(const Image& y) { return clip01(y - residual(y.cast<float>()).cast<double>()); }

  /// Residual loss mean((D(E(y)) - (y - x))^2); accumulates grad_scale * dL when non-zero.
  double loss(const Tensor3<float>& y, const Tensor3<float>& x, double grad_scale = 0.0) {
    const Tensor3<float> pred = residual(y);
    const Tensor3<float> target = y - x;
    const double l = flow::mean_squared_error(pred, target);
    if (grad_scale != 0.0) {
      const float k = static_cast<float>(2.0 * grad_scale / static_cast<double>(pred.size()));
      const auto g = codec_.decode_backward(k * (pred - target));
      codec_.encode_backward(g.dv, g.dskips);
    }
    return l;
  }

 private:
  rspace::RSpaceCodec<float> codec_;
};

/// Adapts a trained ToyRestorer to the expert interface. The restorer caches
/// activations, so one instance must not be shared across threads.
class ToyRestorerExpert final : public FidelityExpert {
 public:
  explicit ToyRestorerExpert(std::shared_ptr<ToyRestorer> r) : r_(std::move(r)) {}
  ExpertKind kind() const override { return ExpertKind::kToyRestorer; }
  Image restore(const Image& y, std::string_view = {}) const override { return r_->restore(y); }

 private:
  std::shared_ptr<ToyRestorer> r_;
};

}  // namespace deblurflow::expert

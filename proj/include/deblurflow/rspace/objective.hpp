#pragma once

#include <cstdint>

#include "deblurflow/flow/path.hpp"
#include "deblurflow/model/vector_field_net.hpp"
#include "deblurflow/rspace/codec.hpp"

namespace deblurflow::rspace {

/// One training example for the latent objective: what the codec sees and
/// what the decoded field must match.
template <typename T>
struct ObjectiveTerms {
  Tensor3<T> input;   // codec input: x_t, or [x_t, condition] when conditioned
  Tensor3<T> target;  // decoded field target
  double t = 0;
};

/// Builds the regression pair for path `kind` between the clean image `x` and
/// the start endpoint `start` (the blur y, or an expert estimate f(y)).
///   deblur: x_t = (1-t) x + t start,         target start - x
///   gen:    x_t = (1-t) x + t eps,           target eps - x
///   n2r:    x_t = (1-t) (start-x) + t eps,   target eps - (start-x), start as condition
template <typename T>
ObjectiveTerms<T> build_objective(flow::PathKind kind, const Image& x, const Image& start, double t, std::uint64_t noise_seed) {
  require_same_shape(x, start, "objective endpoints");
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("path time must lie in [0,1]");
  ObjectiveTerms<T> o;
  o.t = t;
  switch (kind) {
    case flow::PathKind::kDeblurBlurToClean:
      o.input = flow::lerp(x, start, t).cast<T>();
      o.target = (start - x).cast<T>();
      break;
    case flow::PathKind::kGenNoiseToClean: {
      const Image eps = flow::gaussian_noise(x.shape(), noise_seed);
      o.input = flow::lerp(x, eps, t).cast<T>();
      o.target = (eps - x).cast<T>();
      break;
    }
    case flow::PathKind::kNoiseToResidual: {
      const Image eps = flow::gaussian_noise(x.shape(), noise_seed);
      const Image r = start - x;
      o.input = concat_channels(flow::lerp(r, eps, t), start).cast<T>();
      o.target = (eps - r).cast<T>();
      break;
    }
  }
  return o;
}

/// Decoded field D(v(E(input), t)).
template <typename T>
Tensor3<T> predict_field(Codec<T>& codec, model::VectorFieldNet<T>& net, const Tensor3<T>& input, double t) {
  const LatentSample<T> s = codec.encode(input);
  return codec.decode(net.forward(s.z, t), s);
}

/// Mean squared error of the decoded field. When `grad_scale` is non-zero the
/// gradient of grad_scale * loss is accumulated into every trainable tensor of
/// the codec and the network.
template <typename T>
double latent_loss(Codec<T>& codec, model::VectorFieldNet<T>& net, const ObjectiveTerms<T>& o, double grad_scale = 0.0) {
  const Tensor3<T> pred = predict_field(codec, net, o.input, o.t);
  const double loss = flow::mean_squared_error(pred, o.target);
  if (grad_scale != 0.0) {
    const T k = static_cast<T>(2.0 * grad_scale / static_cast<double>(pred.size()));
    const DecodeGrad<T> g = codec.decode_backward(k * (pred - o.target));
    codec.encode_backward(net.backward(g.dv), g.dskips);
  }
  return loss;
}

/// Residual loss of the latent field on a pair whose deblurring path starts
/// at `start` (defaults to the pair's blur).
template <typename T>
double latent_residual_loss(Codec<T>& codec, model::VectorFieldNet<T>& net, const ImagePair& pair, double t,
                            const Image* start = nullptr) {
  const Image& s = start ? *start : pair.blur;
  return latent_loss(codec, net, build_objective<T>(flow::PathKind::kDeblurBlurToClean, pair.sharp, s, t, 0));
}

}  // namespace deblurflow::rspace

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "deblurflow/core/png_io.hpp"
#include "deblurflow/flow/path.hpp"
#include "deblurflow/rspace/objective.hpp"

namespace deblurflow::expert {

struct SamplerConfig {
  int steps = 1;
  double start_t = 1.0;
  std::string expert;  // empty: start from y

  double dt() const { return start_t / steps; }
  void validate() const {
    if (steps < 1) throw InvalidArgument("sampler needs at least one step, got " + std::to_string(steps));
    if (!(start_t > 0.0 && start_t <= 1.0)) throw InvalidArgument("sampler start time must lie in (0,1]");
  }
};

/// Field evaluated at (state, t); returns the velocity to subtract.
using Field = std::function<Image(const Image& state, double t)>;

struct SampleResult {
  Image output;                   // clipped to [0,1]
  std::vector<Image> trajectory;  // steps + 1 unclipped states
  std::vector<double> times;      // start_t descending to 0
};

/// Euler integration x <- x - field(x, t) dt on a uniform grid from start_t
/// down to 0. Clipping is applied once, to the final state.
inline SampleResult sample_euler(const Field& field, const SamplerConfig& cfg, const Image& start) {
  cfg.validate();
  SampleResult r;
  Image x = start;
  const double dt = cfg.dt();
  r.trajectory.push_back(x);
  r.times.push_back(cfg.start_t);
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.start_t - k * dt;
    const Image v = field(x, t);
    require_same_shape(v, x, "field output");
    for (long i = 0; i < x.size(); ++i) x[i] -= v[i] * dt;
    if (!all_finite(x)) throw NumericFailure("non-finite sampler state", k);
    r.trajectory.push_back(x);
    r.times.push_back(k + 1 == cfg.steps ? 0.0 : cfg.start_t - (k + 1) * dt);
  }
  r.output = clip01(x);
  return r;
}

/// A trained flow variant: field network, codec, and the path it was trained on.
template <typename T>
struct FlowModel {
  rspace::Codec<T>* codec = nullptr;
  model::VectorFieldNet<T>* net = nullptr;
  flow::PathKind kind = flow::PathKind::kDeblurBlurToClean;
};

template <typename T>
Field latent_field(FlowModel<T>& m, const Image* condition = nullptr) {
  return [&m, condition](const Image& state, double t) {
    const Image in = condition ? concat_channels(state, *condition) : state;
    return rspace::predict_field(*m.codec, *m.net, in.cast<T>(), t).template cast<double>();
  };
}

/// Refines `start` (the expert estimate f(y), or y) with the latent field.
/// Deblur and generative variants integrate the image state directly. The
/// noise-to-residual variant integrates a residual from noise, conditioned on
/// `start`, and returns start minus that residual.
template <typename T>
SampleResult sample(FlowModel<T>& m, const SamplerConfig& cfg, const Image& start, std::uint64_t noise_seed = 0) {
  if (m.kind != flow::PathKind::kNoiseToResidual) return sample_euler(latent_field(m), cfg, start);
  const Image noise = flow::gaussian_noise(start.shape(), noise_seed);
  SampleResult res = sample_euler(latent_field(m, &start), cfg, noise);
  for (auto& s : res.trajectory) s = start - s;
  res.output = clip01(res.trajectory.back());
  return res;
}

/// Writes the trajectory as one horizontal PNG strip, states left to right.
inline void write_trajectory_strip(const std::filesystem::path& path, const std::vector<Image>& states) {
  require(!states.empty(), "empty trajectory");
  const Shape s = states.front().shape();
  Image strip(s.c, s.h, s.w * static_cast<int>(states.size()));
  for (size_t k = 0; k < states.size(); ++k) {
    require(states[k].shape() == s, "trajectory states differ in shape");
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) strip(c, y, static_cast<int>(k) * s.w + x) = states[k](c, y, x);
  }
  write_png(path.string(), clip01(strip));
}

}  // namespace deblurflow::expert

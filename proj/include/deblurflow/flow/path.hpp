#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "deblurflow/core/rng.hpp"
#include "deblurflow/core/tensor.hpp"
#include "deblurflow/degrade/pair.hpp"

namespace deblurflow::flow {

/// The three trajectories compared in the path study.
enum class PathKind {
  kGenNoiseToClean,    // x_t = (1-t) x + t eps,        v = eps - x
  kDeblurBlurToClean,  // x_t = (1-t) x + t y,          v = y - x
  kNoiseToResidual,    // x_t = (1-t) (y-x) + t eps,    v = eps - (y-x)
};

inline std::string to_string(PathKind k) {
  switch (k) {
    case PathKind::kGenNoiseToClean: return "gen";
    case PathKind::kDeblurBlurToClean: return "deblur";
    case PathKind::kNoiseToResidual: return "noise-to-residual";
  }
  return "?";
}

inline PathKind parse_path_kind(const std::string& s) {
  if (s == "gen" || s == "eps-x") return PathKind::kGenNoiseToClean;
  if (s == "deblur" || s == "y-x") return PathKind::kDeblurBlurToClean;
  if (s == "noise-to-residual" || s == "eps-r") return PathKind::kNoiseToResidual;
  throw InvalidArgument("unknown path kind: " + s);
}

/// True when the network needs the observation as an extra input, i.e. the
/// state itself carries no information about the image being restored.
inline bool needs_condition(PathKind k) { return k == PathKind::kNoiseToResidual; }

struct PathSample {
  PathKind kind = PathKind::kDeblurBlurToClean;
  double t = 0;
  Image x_t;
  Image target_v;
  Image endpoint;   // t = 1 end: eps or y
  Image condition;  // observation fed alongside x_t; empty unless needs_condition(kind)
};

/// Standard-normal image, deterministic in `seed`.
inline Image gaussian_noise(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  Image e(s);
  for (auto& v : e.values()) v = rng.normal();
  return e;
}

inline Image lerp(const Image& a, const Image& b, double t) {
  require_same_shape(a, b, "lerp");
  Image out(a.shape());
  for (long i = 0; i < a.size(); ++i) out[i] = (1.0 - t) * a[i] + t * b[i];
  return out;
}

inline PathSample sample_path(const ImagePair& pair, PathKind kind, double t, std::uint64_t noise_seed) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("path time must lie in [0,1], got " + std::to_string(t));
  PathSample s;
  s.kind = kind;
  s.t = t;
  switch (kind) {
    case PathKind::kGenNoiseToClean:
      s.endpoint = gaussian_noise(pair.sharp.shape(), noise_seed);
      s.x_t = lerp(pair.sharp, s.endpoint, t);
      s.target_v = s.endpoint - pair.sharp;
      break;
    case PathKind::kDeblurBlurToClean:
      s.endpoint = pair.blur;
      s.x_t = lerp(pair.sharp, pair.blur, t);
      s.target_v = pair.blur - pair.sharp;
      break;
    case PathKind::kNoiseToResidual:
      s.endpoint = gaussian_noise(pair.sharp.shape(), noise_seed);
      s.x_t = lerp(pair.residual, s.endpoint, t);
      s.target_v = s.endpoint - pair.residual;
      s.condition = pair.blur;
      break;
  }
  return s;
}

/// Mean of squared differences; the single reduction shared by every loss.
template <typename T>
double mean_squared_error(const Tensor3<T>& pred, const Tensor3<T>& target) {
  require_same_shape(pred, target, "loss");
  double acc = 0;
  for (long i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return pred.size() == 0 ? 0.0 : acc / static_cast<double>(pred.size());
}

inline double flow_matching_loss(const Image& pred_v, const PathSample& sample) {
  return mean_squared_error(pred_v, sample.target_v);
}

inline double residual_loss(const Image& pred_r, const ImagePair& pair) { return mean_squared_error(pred_r, pair.residual); }

enum class TimeSchedule { kUniform01, kLogitNormal };

inline TimeSchedule parse_time_schedule(const std::string& s) {
  if (s == "uniform01" || s == "uniform") return TimeSchedule::kUniform01;
  if (s == "logit-normal") return TimeSchedule::kLogitNormal;
  throw InvalidArgument("unknown time schedule: " + s);
}

inline double draw_time(TimeSchedule schedule, std::uint64_t seed) {
  Rng rng(seed);
  switch (schedule) {
    case TimeSchedule::kUniform01: return rng.uniform();
    case TimeSchedule::kLogitNormal: return 1.0 / (1.0 + std::exp(-rng.normal()));
  }
  throw InvalidArgument("unknown time schedule");
}

}  // namespace deblurflow::flow

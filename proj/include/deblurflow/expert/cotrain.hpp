#pragma once

#include <cstdint>
#include <string>

#include "deblurflow/core/rng.hpp"
#include "deblurflow/degrade/pair.hpp"

namespace deblurflow::expert {

/// rho: probability of drawing the full-degradation pair (y -> x); the rest
/// of the time the expert-dependent pair (f(y) -> x) is drawn.
struct CoTrainConfig {
  double rho = 0.7;
  std::string expert = "toy-restorer";
  std::uint64_t seed = 0;
};

struct TrainingDraw {
  const Image* start = nullptr;  // y or f(y)
  const Image* x = nullptr;
  bool full_degradation = true;
};

inline bool draws_full_degradation(double rho, std::uint64_t seed) {
  require(rho >= 0.0 && rho <= 1.0, "co-training rho must lie in [0,1]");
  if (rho == 1.0) return true;
  if (rho == 0.0) return false;
  return Rng(derive_seed(seed, "cotrain")).uniform() < rho;
}

/// `expert_estimate` is f(y) for this pair, computed once by the caller.
inline TrainingDraw draw_training_pair(const CoTrainConfig& cfg, const ImagePair& pair, const Image& expert_estimate,
                                       std::uint64_t seed) {
  require_same_shape(expert_estimate, pair.blur, "expert estimate");
  const bool full = draws_full_degradation(cfg.rho, derive_seed(cfg.seed, seed));
  return {full ? &pair.blur : &expert_estimate, &pair.sharp, full};
}

}  // namespace deblurflow::expert

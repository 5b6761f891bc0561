#pragma once

#include <string>

#include "deblurflow/core/tensor.hpp"

namespace deblurflow {

/// A blur/sharp pair with its ground-truth residual r = y - x.
struct ImagePair {
  std::string id;
  Image sharp;     // x
  Image blur;      // y
  Image residual;  // y - x
};

inline ImagePair make_pair(std::string id, Image sharp, Image blur) {
  require_same_shape(sharp, blur, "make_pair");
  require(sharp.channels() == 1 || sharp.channels() == 3, "image pairs need 1 or 3 channels");
  ImagePair p;
  p.id = std::move(id);
  p.residual = blur - sharp;
  p.sharp = std::move(sharp);
  p.blur = std::move(blur);
  return p;
}

}  // namespace deblurflow

#pragma once

#include <cstdint>

#include "deblurflow/core/error.hpp"
#include "deblurflow/core/layer_spec.hpp"
#include "deblurflow/core/tensor.hpp"

namespace deblurflow::rspace {

/// Multiply-accumulate count of one layer.
/// conv: Cout * Cin * k^2 * Hout * Wout. linear/projection: tokens * in * out.
/// attention core: QK^T and PV, each tokens^2 * width.
inline std::int64_t mac_cost(const LayerSpec& s) {
  switch (s.kind) {
    case LayerKind::kConv: {
      const int ho = s.out_h(), wo = s.out_w();
      if (ho <= 0 || wo <= 0) throw InvalidArgument("conv '" + s.name + "' has empty output");
      return std::int64_t{s.out} * s.in * s.kernel * s.kernel * ho * wo;
    }
    case LayerKind::kLinear:
    case LayerKind::kAttentionProjection:
      return std::int64_t{s.tokens} * s.in * s.out;
    case LayerKind::kAttentionCore:
      return 2 * std::int64_t{s.tokens} * s.tokens * s.in;
    case LayerKind::kOther:
      break;
  }
  throw Unsupported("no MAC rule for layer '" + s.name + "'");
}

inline std::int64_t mac_cost(const LayerSpecs& specs) {
  std::int64_t total = 0;
  for (const auto& s : specs) total += mac_cost(s);
  return total;
}

template <typename Model>
std::int64_t mac_cost(const Model& m, Shape input) {
  return mac_cost(m.layer_specs(input));
}

/// Layer list of a conventional image autoencoder of the kind used by latent
/// diffusion models: two residual blocks per level at widths {b, 2b, 4b, 4b},
/// three 2x downsamplings, a latent of `latent` channels, and a mirrored
/// decoder with three residual blocks per level. Used for cost comparison only.
inline LayerSpecs vspace_baseline_specs(Shape input, int base = 64, int latent = 8) {
  LayerSpecs s;
  const int widths[4] = {base, 2 * base, 4 * base, 4 * base};
  int h = input.h, w = input.w;
  auto res = [&](const std::string& p, int cin, int cout) {
    s.push_back(LayerSpec::conv(p + ".conv1", cin, cout, 3, 1, 1, h, w));
    s.push_back(LayerSpec::conv(p + ".conv2", cout, cout, 3, 1, 1, h, w));
    if (cin != cout) s.push_back(LayerSpec::conv(p + ".shortcut", cin, cout, 1, 1, 0, h, w));
  };
  s.push_back(LayerSpec::conv("venc.conv_in", input.c, widths[0], 3, 1, 1, h, w));
  int c = widths[0];
  for (int l = 0; l < 4; ++l) {
    for (int b = 0; b < 2; ++b) {
      res("venc.l" + std::to_string(l) + ".res" + std::to_string(b), c, widths[l]);
      c = widths[l];
    }
    if (l < 3) {
      s.push_back(LayerSpec::conv("venc.l" + std::to_string(l) + ".down", c, c, 3, 2, 1, h, w));
      h = (h + 2 - 3) / 2 + 1;
      w = (w + 2 - 3) / 2 + 1;
    }
  }
  res("venc.mid.res0", c, c);
  const long tokens = static_cast<long>(h) * w;
  for (const char* p : {"venc.mid.attn.q", "venc.mid.attn.k", "venc.mid.attn.v", "venc.mid.attn.o"})
    s.push_back(LayerSpec::linear(p, tokens, c, c, LayerKind::kAttentionProjection));
  s.push_back(LayerSpec::attention_core("venc.mid.attn", tokens, c));
  res("venc.mid.res1", c, c);
  s.push_back(LayerSpec::conv("venc.conv_out", c, 2 * latent, 3, 1, 1, h, w));

  s.push_back(LayerSpec::conv("vdec.conv_in", latent, c, 3, 1, 1, h, w));
  res("vdec.mid.res0", c, c);
  for (const char* p : {"vdec.mid.attn.q", "vdec.mid.attn.k", "vdec.mid.attn.v", "vdec.mid.attn.o"})
    s.push_back(LayerSpec::linear(p, tokens, c, c, LayerKind::kAttentionProjection));
  s.push_back(LayerSpec::attention_core("vdec.mid.attn", tokens, c));
  res("vdec.mid.res1", c, c);
  for (int l = 3; l >= 0; --l) {
    for (int b = 0; b < 3; ++b) {
      res("vdec.l" + std::to_string(l) + ".res" + std::to_string(b), c, widths[l]);
      c = widths[l];
    }
    if (l > 0) {
      h *= 2;
      w *= 2;
      s.push_back(LayerSpec::conv("vdec.l" + std::to_string(l) + ".up", c, c, 3, 1, 1, h, w));
    }
  }
  s.push_back(LayerSpec::conv("vdec.conv_out", c, input.c, 3, 1, 1, h, w));
  return s;
}

}  // namespace deblurflow::rspace

#pragma once

#include <string>
#include <vector>

namespace deblurflow {

enum class LayerKind { kConv, kLinear, kAttentionProjection, kAttentionCore, kOther };

/// Shape-resolved description of one compute layer, used for MAC accounting.
/// Conv: in/out channels, kernel, stride, pad, input height/width.
/// Linear and attention projections: `tokens` rows of in -> out.
/// Attention core: QK^T plus PV over `tokens` tokens of total width `in`.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kOther;
  int in = 0;
  int out = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int in_h = 0;
  int in_w = 0;
  long tokens = 0;

  static LayerSpec conv(std::string name, int in, int out, int k, int stride, int pad, int h, int w) {
    return {std::move(name), LayerKind::kConv, in, out, k, stride, pad, h, w, 0};
  }
  static LayerSpec linear(std::string name, long tokens, int in, int out, LayerKind kind = LayerKind::kLinear) {
    LayerSpec s;
    s.name = std::move(name);
    s.kind = kind;
    s.in = in;
    s.out = out;
    s.tokens = tokens;
    return s;
  }
  static LayerSpec attention_core(std::string name, long tokens, int width) {
    LayerSpec s;
    s.name = std::move(name);
    s.kind = LayerKind::kAttentionCore;
    s.in = width;
    s.tokens = tokens;
    return s;
  }
  int out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

using LayerSpecs = std::vector<LayerSpec>;

inline void append(LayerSpecs& dst, const LayerSpecs& src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace deblurflow

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "deblurflow/core/layer_spec.hpp"
#include "deblurflow/model/lora.hpp"
#include "deblurflow/model/nn.hpp"
#include "deblurflow/model/time_embedding.hpp"

namespace deblurflow::model {

struct NetArch {
  int latent_channels = 8;
  int width = 64;
  int depth = 4;
  int heads = 4;
  int mlp_ratio = 2;
  int time_embed_dim = 32;

  friend bool operator==(const NetArch&, const NetArch&) = default;
};

/// Multi-head self-attention whose four projections can carry LoRA adapters.
template <typename T>
class SelfAttention {
 public:
  SelfAttention() = default;
  SelfAttention(const std::string& name, int width, int heads, Rng& rng) : width_(width), heads_(heads) {
    require(width % heads == 0, "attention width must be divisible by heads");
    wq = AdaptedProjection<T>(name + ".wq", width, width, rng);
    wk = AdaptedProjection<T>(name + ".wk", width, width, rng);
    wv = AdaptedProjection<T>(name + ".wv", width, width, rng);
    wo = AdaptedProjection<T>(name + ".wo", width, width, rng);
  }

  AdaptedProjection<T>& projection(LoraTarget t) {
    switch (t) {
      case LoraTarget::kQuery: return wq;
      case LoraTarget::kKey: return wk;
      case LoraTarget::kValue: return wv;
      case LoraTarget::kOutput: return wo;
    }
    return wq;
  }

  Mat<T> forward(const Mat<T>& x) {
    q_ = wq.forward(x);
    k_ = wk.forward(x);
    v_ = wv.forward(x);
    const long n = x.rows();
    const int hd = width_ / heads_;
    const T inv = T(1) / std::sqrt(static_cast<T>(hd));
    probs_.assign(static_cast<size_t>(heads_), Mat<T>());
    Mat<T> mixed(n, width_);
    for (int h = 0; h < heads_; ++h) {
      Mat<T> s = (q_.middleCols(h * hd, hd) * k_.middleCols(h * hd, hd).transpose()) * inv;
      for (long i = 0; i < n; ++i) {
        const T m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp();
        s.row(i) /= s.row(i).sum();
      }
      mixed.middleCols(h * hd, hd).noalias() = s * v_.middleCols(h * hd, hd);
      probs_[static_cast<size_t>(h)] = std::move(s);
    }
    return wo.forward(mixed);
  }

  Mat<T> backward(const Mat<T>& dy) {
    const Mat<T> dmixed = wo.backward(dy);
    const long n = dy.rows();
    const int hd = width_ / heads_;
    const T inv = T(1) / std::sqrt(static_cast<T>(hd));
    Mat<T> dq(n, width_), dk(n, width_), dv(n, width_);
    for (int h = 0; h < heads_; ++h) {
      const Mat<T>& p = probs_[static_cast<size_t>(h)];
      const auto dmh = dmixed.middleCols(h * hd, hd);
      dv.middleCols(h * hd, hd).noalias() = p.transpose() * dmh;
      Mat<T> dp = dmh * v_.middleCols(h * hd, hd).transpose();
      Mat<T> ds(n, n);
      for (long i = 0; i < n; ++i) {
        const T dot = (dp.row(i).array() * p.row(i).array()).sum();
        ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
      }
      ds *= inv;
      dq.middleCols(h * hd, hd).noalias() = ds * k_.middleCols(h * hd, hd);
      dk.middleCols(h * hd, hd).noalias() = ds.transpose() * q_.middleCols(h * hd, hd);
    }
    Mat<T> dx = wq.backward(dq);
    dx += wk.backward(dk);
    dx += wv.backward(dv);
    return dx;
  }

  void collect_base(nn::ParamList<T>& out) {
    for (auto* p : {&wq, &wk, &wv, &wo}) p->base.collect(out);
  }
  void collect_adapters(nn::ParamList<T>& out) {
    for (auto* p : {&wq, &wk, &wv, &wo})
      if (p->adapter) p->adapter->collect(out);
  }

 AdaptedProjection<T> wq, wk, wv, wo;

 private:
  int width_ = 0, heads_ = 1;
  Mat<T> q_, k_, v_;
  std::vector<Mat<T>> probs_;
};

/// Pre-norm transformer block with an additive per-block time projection.
template <typename T>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, const NetArch& a, Rng& rng)
      : time_proj(name + ".time", a.width, a.width, rng),
        norm1(name + ".norm1", a.width),
        attn(name + ".attn", a.width, a.heads, rng),
        norm2(name + ".norm2", a.width),
        mlp_in(name + ".mlp_in", a.width, a.width * a.mlp_ratio, rng),
        mlp_out(name + ".mlp_out", a.width * a.mlp_ratio, a.width, rng) {}

  Mat<T> forward(const Mat<T>& h, const Mat<T>& time_hidden) {
    Mat<T> h1 = h;
    h1.rowwise() += time_proj.forward(time_hidden).row(0);
    Mat<T> h2 = h1 + attn.forward(norm1.forward(h1));
    return h2 + mlp_out.forward(act.forward(mlp_in.forward(norm2.forward(h2))));
  }

  /// Returns dL/dh; adds this block's contribution to dL/d(time_hidden).
  Mat<T> backward(const Mat<T>& dy, Mat<T>& dtime_hidden) {
    Mat<T> dh2 = dy + norm2.backward(mlp_in.backward(act.backward(mlp_out.backward(dy))));
    Mat<T> dh1 = dh2 + norm1.backward(attn.backward(dh2));
    Mat<T> dt = dh1.colwise().sum();
    dtime_hidden += time_proj.backward(dt);
    return dh1;
  }

  void collect_base(nn::ParamList<T>& out) {
    time_proj.collect(out);
    norm1.collect(out);
    attn.collect_base(out);
    norm2.collect(out);
    mlp_in.collect(out);
    mlp_out.collect(out);
  }

  nn::Linear<T> time_proj;
  nn::LayerNorm<T> norm1;
  SelfAttention<T> attn;
  nn::LayerNorm<T> norm2;
  nn::Linear<T> mlp_in, mlp_out;
  nn::SiLU<T> act;
};

/// Time-conditioned vector-field network over latent tokens.
///
/// A latent (C, h, w) becomes h*w tokens of C features, is lifted to `width`,
/// passes through `depth` transformer blocks and is projected back to C.
/// Base weights (theta) carry the `base.` prefix; adapters (phi) carry
/// `lora.` and are the only trainable tensors once `freeze_base()` runs.
template <typename T>
class VectorFieldNet {
 public:
  VectorFieldNet(const NetArch& arch, std::uint64_t seed) : arch_(arch) {
    require(arch.latent_channels >= 1 && arch.width >= 1 && arch.depth >= 0, "invalid network architecture");
    Rng rng(seed);
    embed_ = nn::Linear<T>("base.embed", arch.latent_channels, arch.width, rng);
    time_mlp_ = nn::Linear<T>("base.time_mlp", arch.time_embed_dim, arch.width, rng);
    for (int b = 0; b < arch.depth; ++b) blocks_.emplace_back("base.block" + std::to_string(b), arch, rng);
    final_norm_ = nn::LayerNorm<T>("base.final_norm", arch.width);
    head_ = nn::Linear<T>("base.head", arch.width, arch.latent_channels, rng);
  }

  // Layers cache activations and parameters are referenced by pointer.
  VectorFieldNet(const VectorFieldNet&) = delete;
  VectorFieldNet& operator=(const VectorFieldNet&) = delete;

  const NetArch& arch() const { return arch_; }
  const LoraConfig& lora() const { return lora_; }
  bool has_adapters() const { return has_adapters_; }

  /// Attaches a fresh adapter to every configured projection of every block.
  void attach_adapters(const LoraConfig& cfg, std::uint64_t seed) {
    lora_ = cfg;
    Rng rng(seed);
    for (size_t b = 0; b < blocks_.size(); ++b)
      for (LoraTarget t : cfg.targets)
        blocks_[b].attn.projection(t).attach("lora.block" + std::to_string(b) + "." + target_name(t), cfg.rank, cfg.alpha, rng);
    has_adapters_ = !cfg.targets.empty() && !blocks_.empty();
  }

  /// Folds every adapter into its host weight and removes it.
  void merge_adapters() {
    for (auto& blk : blocks_)
      for (LoraTarget t : {LoraTarget::kQuery, LoraTarget::kKey, LoraTarget::kValue, LoraTarget::kOutput})
        blk.attn.projection(t).merge();
    has_adapters_ = false;
  }

  void freeze_base(bool frozen = true) {
    for (auto* p : base_params()) p->trainable = !frozen;
  }

  Tensor3<T> forward(const Tensor3<T>& z, double t) {
    if (z.channels() != arch_.latent_channels)
      throw InvalidArgument("latent has " + std::to_string(z.channels()) + " channels, network expects " +
                            std::to_string(arch_.latent_channels));
    if (!all_finite(z)) throw InvalidArgument("non-finite latent input");
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("time must lie in [0,1]");
    latent_shape_ = z.shape();
    const auto emb = time_embedding(t, arch_.time_embed_dim);
    Mat<T> e(1, arch_.time_embed_dim);
    for (int i = 0; i < arch_.time_embed_dim; ++i) e(0, i) = static_cast<T>(emb[static_cast<size_t>(i)]);
    const Mat<T> time_hidden = time_act_.forward(time_mlp_.forward(e));

    Mat<T> h = embed_.forward(z.matrix().transpose());
    for (auto& blk : blocks_) h = blk.forward(h, time_hidden);
    const Mat<T> out = head_.forward(final_norm_.forward(h));

    Tensor3<T> v(z.shape());
    v.matrix() = out.transpose();
    return v;
  }

  /// Backpropagates dL/dv from the latest forward; returns dL/dz.
  Tensor3<T> backward(const Tensor3<T>& dv) {
    require(dv.shape() == latent_shape_, "backward: gradient shape does not match last forward");
    Mat<T> dh = final_norm_.backward(head_.backward(dv.matrix().transpose()));
    Mat<T> dtime = Mat<T>::Zero(1, arch_.width);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) dh = it->backward(dh, dtime);
    time_mlp_.backward(time_act_.backward(dtime));
    const Mat<T> dx = embed_.backward(dh);
    Tensor3<T> dz(latent_shape_);
    dz.matrix() = dx.transpose();
    return dz;
  }

  nn::ParamList<T> base_params() {
    nn::ParamList<T> out;
    embed_.collect(out);
    time_mlp_.collect(out);
    for (auto& b : blocks_) b.collect_base(out);
    final_norm_.collect(out);
    head_.collect(out);
    return out;
  }

  nn::ParamList<T> adapter_params() {
    nn::ParamList<T> out;
    for (auto& b : blocks_) b.attn.collect_adapters(out);
    return out;
  }

  nn::ParamList<T> all_params() {
    auto out = base_params();
    for (auto* p : adapter_params()) out.push_back(p);
    return out;
  }

  /// Adapter A/B tensors only. Base weights are never included.
  nn::ParamList<T> trainable_params() { return adapter_params(); }

  LayerSpecs layer_specs(Shape latent) const {
    const long n = static_cast<long>(latent.h) * latent.w;
    const int d = arch_.width;
    LayerSpecs s{LayerSpec::linear("embed", n, arch_.latent_channels, d)};
    for (int b = 0; b < arch_.depth; ++b) {
      const std::string p = "block" + std::to_string(b);
      for (const char* w : {".wq", ".wk", ".wv"}) s.push_back(LayerSpec::linear(p + w, n, d, d, LayerKind::kAttentionProjection));
      s.push_back(LayerSpec::attention_core(p + ".attn", n, d));
      s.push_back(LayerSpec::linear(p + ".wo", n, d, d, LayerKind::kAttentionProjection));
      s.push_back(LayerSpec::linear(p + ".mlp_in", n, d, d * arch_.mlp_ratio));
      s.push_back(LayerSpec::linear(p + ".mlp_out", n, d * arch_.mlp_ratio, d));
    }
    s.push_back(LayerSpec::linear("head", n, d, arch_.latent_channels));
    return s;
  }

 private:
  NetArch arch_;
  LoraConfig lora_{0, 0.0, {}};
  bool has_adapters_ = false;
  nn::Linear<T> embed_, time_mlp_, head_;
  nn::SiLU<T> time_act_;
  std::vector<TransformerBlock<T>> blocks_;
  nn::LayerNorm<T> final_norm_;
  Shape latent_shape_{};
};

}  // namespace deblurflow::model

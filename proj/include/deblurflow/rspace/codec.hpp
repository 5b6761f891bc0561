#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deblurflow/core/layer_spec.hpp"
#include "deblurflow/model/nn.hpp"

namespace deblurflow::rspace {

template <typename T>
struct LatentSample {
  Tensor3<T> z;
  std::vector<Tensor3<T>> skips;  // stage s has spatial size padded / 2^s
  Shape source_shape{};
  Shape padded_shape{};
};

template <typename T>
struct DecodeGrad {
  Tensor3<T> dv;
  std::vector<Tensor3<T>> dskips;
};

/// Common interface of the latent codecs that wrap the vector-field network.
/// Each instance caches one forward pass for the matching backward call.
template <typename T>
class Codec {
 public:
  virtual ~Codec() = default;
  virtual int stages() const = 0;
  virtual int in_channels() const = 0;
  virtual int latent_channels() const = 0;
  virtual LatentSample<T> encode(const Tensor3<T>& x) = 0;
  virtual Tensor3<T> decode(const Tensor3<T>& v, const LatentSample<T>& sample) = 0;
  virtual DecodeGrad<T> decode_backward(const Tensor3<T>& dr) = 0;
  virtual void encode_backward(const Tensor3<T>& dz, const std::vector<Tensor3<T>>& dskips) = 0;
  virtual nn::ParamList<T> params() = 0;
  virtual LayerSpecs encoder_specs(Shape input) const = 0;
  virtual LayerSpecs decoder_specs(Shape input) const = 0;

  LayerSpecs layer_specs(Shape input) const {
    LayerSpecs s = encoder_specs(input);
    append(s, decoder_specs(input));
    return s;
  }

  Shape latent_shape(Shape input) const {
    const int f = 1 << stages();
    return {latent_channels(), (input.h + f - 1) / f, (input.w + f - 1) / f};
  }

  void set_trainable(bool on) {
    for (auto* p : params()) p->trainable = on;
  }

 protected:
  Tensor3<T> pad_input(const Tensor3<T>& x, LatentSample<T>& s) const {
    require(x.channels() == in_channels(), "codec expects " + std::to_string(in_channels()) + " channels, got " +
                                               std::to_string(x.channels()));
    if (!all_finite(x)) throw InvalidArgument("non-finite codec input");
    const int f = 1 << stages();
    s.source_shape = x.shape();
    s.padded_shape = {x.channels(), (x.height() + f - 1) / f * f, (x.width() + f - 1) / f * f};
    return reflect_pad_to(x, s.padded_shape.h, s.padded_shape.w);
  }
};

struct CodecConfig {
  int in_channels = 3;
  int out_channels = 3;
  int base_channels = 16;
  int stages = 3;
  int latent_channels = 8;
  bool skip = true;

  int width(int s) const { return base_channels << s; }
  friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};

/// Skip-connected residual codec. The encoder runs, per stage, a residual
/// block, a skip tap and a stride-2 downsampling conv that doubles the width,
/// then projects to the latent. The decoder mirrors it with pixel-shuffle
/// upsampling, concatenation of the matching skip and a 1x1 merge, and ends in
/// a zero-initialized 3x3 head so that a fresh codec decodes to zero.
template <typename T>
class RSpaceCodec final : public Codec<T> {
 public:
  RSpaceCodec(const CodecConfig& cfg, std::uint64_t seed, const std::string& name = "codec") : cfg_(cfg) {
    require(cfg.stages >= 1 && cfg.base_channels >= 1 && cfg.latent_channels >= 1, "invalid codec configuration");
    Rng rng(seed);
    const int S = cfg.stages;
    intro_ = nn::Conv2d<T>::same(name + ".enc.intro", cfg.in_channels, cfg.width(0), 3, rng);
    for (int s = 0; s < S; ++s) {
      const std::string p = name + ".enc.stage" + std::to_string(s);
      enc_res_.emplace_back(p + ".res", cfg.width(s), rng);
      down_.emplace_back(p + ".down", cfg.width(s), cfg.width(s + 1), 2, 2, 0, rng);
    }
    to_latent_ = nn::Conv2d<T>(name + ".enc.to_latent", cfg.width(S), cfg.latent_channels, 1, 1, 0, rng);
    from_latent_ = nn::Conv2d<T>(name + ".dec.from_latent", cfg.latent_channels, cfg.width(S), 1, 1, 0, rng);
    up_.resize(static_cast<size_t>(S));
    merge_.resize(static_cast<size_t>(S));
    dec_res_.resize(static_cast<size_t>(S));
    for (int s = S - 1; s >= 0; --s) {
      const std::string p = name + ".dec.stage" + std::to_string(s);
      up_[s] = nn::Conv2d<T>(p + ".up", cfg.width(s + 1), 4 * cfg.width(s), 1, 1, 0, rng);
      if (cfg.skip) merge_[s] = nn::Conv2d<T>(p + ".merge", 2 * cfg.width(s), cfg.width(s), 1, 1, 0, rng);
      dec_res_[s] = nn::ResBlock<T>(p + ".res", cfg.width(s), rng);
    }
    head_ = nn::Conv2d<T>::same(name + ".dec.head", cfg.width(0), cfg.out_channels, 3, rng);
    head_.zero_init();
  }

  const CodecConfig& config() const { return cfg_; }
  int stages() const override { return cfg_.stages; }
  int in_channels() const override { return cfg_.in_channels; }
  int latent_channels() const override { return cfg_.latent_channels; }
  nn::Conv2d<T>& head() { return head_; }

  LatentSample<T> encode(const Tensor3<T>& x) override {
    LatentSample<T> out;
    Tensor3<T> h = intro_.forward(this->pad_input(x, out));
    for (int s = 0; s < cfg_.stages; ++s) {
      h = enc_res_[s].forward(h);
      if (cfg_.skip) out.skips.push_back(h);
      h = down_[s].forward(h);
    }
    out.z = to_latent_.forward(h);
    return out;
  }

  Tensor3<T> decode(const Tensor3<T>& v, const LatentSample<T>& sample) override {
    const Shape zs{cfg_.latent_channels, sample.padded_shape.h >> cfg_.stages, sample.padded_shape.w >> cfg_.stages};
    if (v.shape() != zs) throw InvalidArgument("decode: latent shape " + v.shape().str() + ", expected " + zs.str());
    if (sample.skips.size() != (cfg_.skip ? static_cast<size_t>(cfg_.stages) : 0u))
      throw InvalidArgument("decode: skip count does not match codec configuration");
    out_shape_ = sample.source_shape;
    Tensor3<T> h = from_latent_.forward(v);
    for (int s = cfg_.stages - 1; s >= 0; --s) {
      Tensor3<T> u = nn::pixel_shuffle(up_[s].forward(h), 2);
      if (cfg_.skip) {
        const auto& sk = sample.skips[static_cast<size_t>(s)];
        if (sk.shape() != u.shape()) throw InvalidArgument("decode: skip " + std::to_string(s) + " has shape " + sk.shape().str() + ", expected " + u.shape().str());
        u = merge_[s].forward(concat_channels(u, sk));
      }
      h = dec_res_[s].forward(u);
    }
    padded_out_ = {cfg_.out_channels, h.height(), h.width()};
    return crop(head_.forward(h), 0, 0, out_shape_.h, out_shape_.w);
  }

  DecodeGrad<T> decode_backward(const Tensor3<T>& dr) override {
    DecodeGrad<T> g;
    if (cfg_.skip) g.dskips.resize(static_cast<size_t>(cfg_.stages));
    Tensor3<T> dh = head_.backward(zero_pad_to(dr, padded_out_.h, padded_out_.w));
    for (int s = 0; s < cfg_.stages; ++s) {
      Tensor3<T> du = dec_res_[s].backward(dh);
      if (cfg_.skip) {
        const Tensor3<T> dcat = merge_[s].backward(du);
        const int c = cfg_.width(s);
        g.dskips[s] = slice_channels(dcat, c, c);
        du = slice_channels(dcat, 0, c);
      }
      dh = up_[s].backward(nn::pixel_unshuffle(du, 2));
    }
    g.dv = from_latent_.backward(dh);
    return g;
  }

  void encode_backward(const Tensor3<T>& dz, const std::vector<Tensor3<T>>& dskips) override {
    require(dskips.size() == (cfg_.skip ? static_cast<size_t>(cfg_.stages) : 0u), "encode_backward: skip gradient count");
    Tensor3<T> dh = to_latent_.backward(dz);
    for (int s = cfg_.stages - 1; s >= 0; --s) {
      dh = down_[s].backward(dh);
      if (cfg_.skip) dh = dh + dskips[static_cast<size_t>(s)];
      dh = enc_res_[s].backward(dh);
    }
    intro_.backward(dh, false);
  }

  nn::ParamList<T> params() override {
    nn::ParamList<T> out;
    intro_.collect(out);
    for (int s = 0; s < cfg_.stages; ++s) {
      enc_res_[s].collect(out);
      down_[s].collect(out);
    }
    to_latent_.collect(out);
    from_latent_.collect(out);
    for (int s = cfg_.stages - 1; s >= 0; --s) {
      up_[s].collect(out);
      if (cfg_.skip) merge_[s].collect(out);
      dec_res_[s].collect(out);
    }
    head_.collect(out);
    return out;
  }

  LayerSpecs encoder_specs(Shape input) const override {
    const int f = 1 << cfg_.stages;
    int h = (input.h + f - 1) / f * f, w = (input.w + f - 1) / f * f;
    LayerSpecs s{LayerSpec::conv("enc.intro", cfg_.in_channels, cfg_.width(0), 3, 1, 1, h, w)};
    for (int st = 0; st < cfg_.stages; ++st) {
      const int c = cfg_.width(st);
      const std::string p = "enc.stage" + std::to_string(st);
      s.push_back(LayerSpec::conv(p + ".res.conv1", c, c, 3, 1, 1, h, w));
      s.push_back(LayerSpec::conv(p + ".res.conv2", c, c, 3, 1, 1, h, w));
      s.push_back(LayerSpec::conv(p + ".down", c, 2 * c, 2, 2, 0, h, w));
      h /= 2;
      w /= 2;
    }
    s.push_back(LayerSpec::conv("enc.to_latent", cfg_.width(cfg_.stages), cfg_.latent_channels, 1, 1, 0, h, w));
    return s;
  }

  LayerSpecs decoder_specs(Shape input) const override {
    const int f = 1 << cfg_.stages;
    int h = (input.h + f - 1) / f, w = (input.w + f - 1) / f;
    LayerSpecs s{LayerSpec::conv("dec.from_latent", cfg_.latent_channels, cfg_.width(cfg_.stages), 1, 1, 0, h, w)};
    for (int st = cfg_.stages - 1; st >= 0; --st) {
      const int c = cfg_.width(st);
      const std::string p = "dec.stage" + std::to_string(st);
      s.push_back(LayerSpec::conv(p + ".up", 2 * c, 4 * c, 1, 1, 0, h, w));
      h *= 2;
      w *= 2;
      if (cfg_.skip) s.push_back(LayerSpec::conv(p + ".merge", 2 * c, c, 1, 1, 0, h, w));
      s.push_back(LayerSpec::conv(p + ".res.conv1", c, c, 3, 1, 1, h, w));
      s.push_back(LayerSpec::conv(p + ".res.conv2", c, c, 3, 1, 1, h, w));
    }
    s.push_back(LayerSpec::conv("dec.head", cfg_.width(0), cfg_.out_channels, 3, 1, 1, h, w));
    return s;
  }

 private:
  CodecConfig cfg_;
  nn::Conv2d<T> intro_, to_latent_, from_latent_, head_;
  std::vector<nn::ResBlock<T>> enc_res_, dec_res_;
  std::vector<nn::Conv2d<T>> down_, up_, merge_;
  Shape out_shape_{}, padded_out_{};
};

/// Linear patch codec: space-to-depth by 2^stages and a 1x1 projection, with
/// the transposed structure on the way back and no skips. This is the latent
/// space the base generative network is trained in.
template <typename T>
class PatchCodec final : public Codec<T> {
 public:
  PatchCodec(int channels, int stages, int latent_channels, std::uint64_t seed, const std::string& name = "base.patch")
      : channels_(channels), stages_(stages), latent_(latent_channels) {
    require(stages >= 0 && channels >= 1 && latent_channels >= 1, "invalid patch codec configuration");
    Rng rng(seed);
    const int unfolded = channels << (2 * stages);
    enc_ = nn::Conv2d<T>(name + ".enc", unfolded, latent_channels, 1, 1, 0, rng);
    dec_ = nn::Conv2d<T>(name + ".dec", latent_channels, unfolded, 1, 1, 0, rng);
  }

  int stages() const override { return stages_; }
  int in_channels() const override { return channels_; }
  int latent_channels() const override { return latent_; }

  LatentSample<T> encode(const Tensor3<T>& x) override {
    LatentSample<T> out;
    out.z = enc_.forward(nn::pixel_unshuffle(this->pad_input(x, out), 1 << stages_));
    return out;
  }

  Tensor3<T> decode(const Tensor3<T>& v, const LatentSample<T>& sample) override {
    const Shape zs{latent_, sample.padded_shape.h >> stages_, sample.padded_shape.w >> stages_};
    if (v.shape() != zs) throw InvalidArgument("decode: latent shape " + v.shape().str() + ", expected " + zs.str());
    if (!sample.skips.empty()) throw InvalidArgument("decode: patch codec takes no skips");
    out_shape_ = sample.source_shape;
    padded_ = sample.padded_shape;
    return crop(nn::pixel_shuffle(dec_.forward(v), 1 << stages_), 0, 0, out_shape_.h, out_shape_.w);
  }

  DecodeGrad<T> decode_backward(const Tensor3<T>& dr) override {
    DecodeGrad<T> g;
    g.dv = dec_.backward(nn::pixel_unshuffle(zero_pad_to(dr, padded_.h, padded_.w), 1 << stages_));
    return g;
  }

  void encode_backward(const Tensor3<T>& dz, const std::vector<Tensor3<T>>&) override { enc_.backward(dz, false); }

  nn::ParamList<T> params() override {
    nn::ParamList<T> out;
    enc_.collect(out);
    dec_.collect(out);
    return out;
  }

  LayerSpecs encoder_specs(Shape input) const override {
    const int f = 1 << stages_;
    return {LayerSpec::conv("patch.enc", channels_ * f * f, latent_, 1, 1, 0, (input.h + f - 1) / f, (input.w + f - 1) / f)};
  }
  LayerSpecs decoder_specs(Shape input) const override {
    const int f = 1 << stages_;
    return {LayerSpec::conv("patch.dec", latent_, channels_ * f * f, 1, 1, 0, (input.h + f - 1) / f, (input.w + f - 1) / f)};
  }

 private:
  int channels_, stages_, latent_;
  nn::Conv2d<T> enc_, dec_;
  Shape out_shape_{}, padded_{};
};

}  // namespace deblurflow::rspace

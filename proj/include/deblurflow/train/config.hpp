#pragma once

#include <cstdint>
#include <string>

#include "deblurflow/core/config.hpp"
#include "deblurflow/flow/path.hpp"
#include "deblurflow/model/lora.hpp"
#include "deblurflow/model/vector_field_net.hpp"
#include "deblurflow/rspace/codec.hpp"
#include "deblurflow/train/optim.hpp"

namespace deblurflow::train {

/// Every knob of one training stage. Round-trips through `Config` so a run
/// directory's config.cfg reproduces the run.
struct TrainConfig {
  std::string name = "run";
  int stage = 2;  // 0: toy restorer, 1: generative base, 2: adaptation
  std::uint64_t seed = 1;

  std::string dataset = "data";
  int crop = 32;

  AdamWConfig optim{};
  double grad_clip = 1.0;
  double lr_floor = 0.01;
  int epochs = 10;
  int batch = 8;
  long max_steps = 0;  // 0: epochs * ceil(n / batch)
  flow::TimeSchedule time_schedule = flow::TimeSchedule::kUniform01;

  flow::PathKind path = flow::PathKind::kDeblurBlurToClean;
  double rho = 0.7;
  std::string expert = "toy-restorer";
  bool rspace = true;  // false: reuse the frozen base patch codec
  std::string base_checkpoint;
  std::string expert_checkpoint;
  double wiener_nsr = 1e-2;
  int val_steps = 1;

  model::NetArch net{};
  int codec_base_channels = 16;
  int codec_stages = 3;
  bool codec_skip = true;
  model::LoraConfig lora{};

  int expert_base_channels = 16;
  int expert_stages = 3;
  int expert_latent_channels = 8;

  rspace::CodecConfig codec_config() const {
    rspace::CodecConfig c;
    c.in_channels = flow::needs_condition(path) ? 6 : 3;
    c.out_channels = 3;
    c.base_channels = codec_base_channels;
    c.stages = codec_stages;
    c.latent_channels = net.latent_channels;
    c.skip = codec_skip;
    return c;
  }

  rspace::CodecConfig expert_codec_config() const {
    rspace::CodecConfig c;
    c.base_channels = expert_base_channels;
    c.stages = expert_stages;
    c.latent_channels = expert_latent_channels;
    return c;
  }

  void validate() const {
    if (stage < 0 || stage > 2) throw InvalidArgument("unknown training stage " + std::to_string(stage));
    if (!(optim.lr >= 0)) throw InvalidArgument("learning rate must be non-negative");
    if (rho < 0 || rho > 1) throw InvalidArgument("co-training rho must lie in [0,1]");
    if (batch < 1 || epochs < 0 || crop < 1) throw InvalidArgument("batch, epochs and crop must be positive");
    if (val_steps < 1) throw InvalidArgument("val_steps must be >= 1");
    if (!rspace && flow::needs_condition(path)) throw InvalidArgument("the patch codec cannot take a conditioned input");
  }

  Config to_config() const {
    Config c;
    auto d = [](double v) { return format_double(v); };
    c.set("run.name", name);
    c.set("run.stage", std::to_string(stage));
    c.set("run.seed", std::to_string(seed));
    c.set("data.root", dataset);
    c.set("data.crop", std::to_string(crop));
    c.set("train.lr", d(optim.lr));
    c.set("train.beta1", d(optim.beta1));
    c.set("train.beta2", d(optim.beta2));
    c.set("train.weight_decay", d(optim.weight_decay));
    c.set("train.eps", d(optim.eps));
    c.set("train.grad_clip", d(grad_clip));
    c.set("train.lr_floor", d(lr_floor));
    c.set("train.epochs", std::to_string(epochs));
    c.set("train.batch", std::to_string(batch));
    c.set("train.max_steps", std::to_string(max_steps));
    c.set("train.time_schedule", time_schedule == flow::TimeSchedule::kUniform01 ? "uniform01" : "logit-normal");
    c.set("flow.path", flow::to_string(path));
    c.set("flow.rho", d(rho));
    c.set("flow.expert", expert);
    c.set("flow.rspace", rspace ? "true" : "false");
    c.set("flow.base_checkpoint", base_checkpoint);
    c.set("flow.expert_checkpoint", expert_checkpoint);
    c.set("flow.wiener_nsr", d(wiener_nsr));
    c.set("flow.val_steps", std::to_string(val_steps));
    c.set("net.latent_channels", std::to_string(net.latent_channels));
    c.set("net.width", std::to_string(net.width));
    c.set("net.depth", std::to_string(net.depth));
    c.set("net.heads", std::to_string(net.heads));
    c.set("net.mlp_ratio", std::to_string(net.mlp_ratio));
    c.set("net.time_embed_dim", std::to_string(net.time_embed_dim));
    c.set("codec.base_channels", std::to_string(codec_base_channels));
    c.set("codec.stages", std::to_string(codec_stages));
    c.set("codec.skip", codec_skip ? "true" : "false");
    c.set("lora.rank", std::to_string(lora.rank));
    c.set("lora.alpha", d(lora.alpha));
    std::string targets;
    for (auto t : lora.targets) targets += (targets.empty() ? "" : ",") + std::string(model::target_name(t));
    c.set("lora.targets", targets.empty() ? "none" : targets);
    c.set("expert.base_channels", std::to_string(expert_base_channels));
    c.set("expert.stages", std::to_string(expert_stages));
    c.set("expert.latent_channels", std::to_string(expert_latent_channels));
    return c;
  }

  /// Defaults are filled in for any key the config omits.
  static TrainConfig from_config(const Config& c) {
    TrainConfig t;
    auto i = [&](const char* k, long def) { return static_cast<int>(c.get_int(k, def)); };
    t.name = c.get_string("run.name", t.name);
    t.stage = i("run.stage", t.stage);
    t.seed = static_cast<std::uint64_t>(c.get_int("run.seed", static_cast<long>(t.seed)));
    t.dataset = c.get_string("data.root", t.dataset);
    t.crop = i("data.crop", t.crop);
    t.optim.lr = c.get_double("train.lr", t.optim.lr);
    t.optim.beta1 = c.get_double("train.beta1", t.optim.beta1);
    t.optim.beta2 = c.get_double("train.beta2", t.optim.beta2);
    t.optim.weight_decay = c.get_double("train.weight_decay", t.optim.weight_decay);
    t.optim.eps = c.get_double("train.eps", t.optim.eps);
    t.grad_clip = c.get_double("train.grad_clip", t.grad_clip);
    t.lr_floor = c.get_double("train.lr_floor", t.lr_floor);
    t.epochs = i("train.epochs", t.epochs);
    t.batch = i("train.batch", t.batch);
    t.max_steps = c.get_int("train.max_steps", t.max_steps);
    t.time_schedule = flow::parse_time_schedule(c.get_string("train.time_schedule", "uniform01"));
    t.path = flow::parse_path_kind(c.get_string("flow.path", flow::to_string(t.path)));
    t.rho = c.get_double("flow.rho", t.rho);
    t.expert = c.get_string("flow.expert", t.expert);
    t.rspace = c.get_bool("flow.rspace", t.rspace);
    t.base_checkpoint = c.get_string("flow.base_checkpoint", t.base_checkpoint);
    t.expert_checkpoint = c.get_string("flow.expert_checkpoint", t.expert_checkpoint);
    t.wiener_nsr = c.get_double("flow.wiener_nsr", t.wiener_nsr);
    t.val_steps = i("flow.val_steps", t.val_steps);
    t.net.latent_channels = i("net.latent_channels", t.net.latent_channels);
    t.net.width = i("net.width", t.net.width);
    t.net.depth = i("net.depth", t.net.depth);
    t.net.heads = i("net.heads", t.net.heads);
    t.net.mlp_ratio = i("net.mlp_ratio", t.net.mlp_ratio);
    t.net.time_embed_dim = i("net.time_embed_dim", t.net.time_embed_dim);
    t.codec_base_channels = i("codec.base_channels", t.codec_base_channels);
    t.codec_stages = i("codec.stages", t.codec_stages);
    t.codec_skip = c.get_bool("codec.skip", t.codec_skip);
    t.lora.rank = i("lora.rank", t.lora.rank);
    t.lora.alpha = c.get_double("lora.alpha", t.lora.alpha);
    if (c.has("lora.targets")) {
      t.lora.targets.clear();
      for (const auto& name : Config::split(c.get_string("lora.targets"), ',')) {
        if (name == "none" || name.empty()) continue;
        bool ok = false;
        for (auto tg : {model::LoraTarget::kQuery, model::LoraTarget::kKey, model::LoraTarget::kValue, model::LoraTarget::kOutput})
          if (name == model::target_name(tg)) {
            t.lora.targets.push_back(tg);
            ok = true;
          }
        if (!ok) throw InvalidArgument("unknown LoRA target: " + name);
      }
    }
    t.expert_base_channels = i("expert.base_channels", t.expert_base_channels);
    t.expert_stages = i("expert.stages", t.expert_stages);
    t.expert_latent_channels = i("expert.latent_channels", t.expert_latent_channels);
    t.validate();
    return t;
  }
};

}  // namespace deblurflow::train

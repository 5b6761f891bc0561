#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "deblurflow/core/checkpoint.hpp"
#include "deblurflow/degrade/dataset.hpp"
#include "deblurflow/eval/metrics.hpp"
#include "deblurflow/expert/cotrain.hpp"
#include "deblurflow/expert/fidelity.hpp"
#include "deblurflow/expert/sampler.hpp"
#include "deblurflow/expert/toy_restorer.hpp"
#include "deblurflow/rspace/objective.hpp"
#include "deblurflow/train/config.hpp"
#include "deblurflow/train/optim.hpp"

namespace deblurflow::train {

namespace fs = std::filesystem;

/// Run root: $DEBLURFLOW_RUNS_DIR if set, else ./runs.
inline fs::path runs_root() {
  const char* env = std::getenv("DEBLURFLOW_RUNS_DIR");
  return env && *env ? fs::path(env) : fs::path("runs");
}

struct EpochRow {
  int epoch = 0;
  long steps = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_psnr = 0;
  double wall_seconds = 0;
  double lr = 0;
};

struct StepRow {
  long step = 0;
  double loss = 0;
  double baseline = 0;  // loss of the zero predictor on the same batch
  double lr = 0;
  double grad_norm = 0;
};

struct RunRecord {
  std::vector<EpochRow> epochs;
  std::vector<StepRow> steps;
  std::uint64_t config_hash = 0;
  std::string checkpoint;
  double full_degradation_fraction = 0;
  double grad_clip = 0;
  double eps = 0;

  const EpochRow& last() const {
    if (epochs.empty()) throw InvalidArgument("run record has no epochs");
    return epochs.back();
  }

  std::string csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "epoch,steps,train_loss,val_loss,val_psnr,wall_seconds,lr,config_hash,checkpoint,grad_clip,opt_eps\n";
    for (const auto& e : epochs)
      out << e.epoch << "," << e.steps << "," << e.train_loss << "," << e.val_loss << "," << e.val_psnr << ","
          << e.wall_seconds << "," << e.lr << "," << config_hash << "," << checkpoint << "," << grad_clip << "," << eps << "\n";
    return out.str();
  }

  std::string steps_csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "step,loss,baseline,lr,grad_norm\n";
    for (const auto& s : steps) out << s.step << "," << s.loss << "," << s.baseline << "," << s.lr << "," << s.grad_norm << "\n";
    return out.str();
  }
};

/// Names trainable in `stage`: 0 the toy restorer, 1 the base network and its
/// patch codec, 2 the adapters and the r-space codec.
inline std::set<std::string> freeze_mask(int stage, const nn::ParamList<float>& all) {
  std::vector<std::string> prefixes;
  switch (stage) {
    case 0: prefixes = {"expert."}; break;
    case 1: prefixes = {"base."}; break;
    case 2: prefixes = {"lora.", "codec."}; break;
    default: throw InvalidArgument("unknown training stage " + std::to_string(stage));
  }
  std::set<std::string> out;
  for (const auto* p : all)
    for (const auto& pre : prefixes)
      if (p->name.rfind(pre, 0) == 0) out.insert(p->name);
  return out;
}

inline void apply_mask(const nn::ParamList<float>& all, const std::set<std::string>& mask) {
  for (auto* p : all) p->trainable = mask.count(p->name) > 0;
}

/// A flow network together with the codec it runs in.
struct FlowVariant {
  TrainConfig cfg;
  std::unique_ptr<model::VectorFieldNet<float>> net;
  std::unique_ptr<rspace::Codec<float>> codec;

  expert::FlowModel<float> flow() { return {codec.get(), net.get(), cfg.stage == 1 ? flow::PathKind::kGenNoiseToClean : cfg.path}; }

  nn::ParamList<float> all_params() {
    auto out = net->all_params();
    for (auto* p : codec->params()) out.push_back(p);
    return out;
  }
};

inline std::unique_ptr<rspace::PatchCodec<float>> make_patch_codec(const TrainConfig& cfg) {
  return std::make_unique<rspace::PatchCodec<float>>(3, cfg.codec_stages, cfg.net.latent_channels, derive_seed(cfg.seed, "patch"));
}

/// Fresh stage-1 variant: base network over the patch codec, all trainable.
inline FlowVariant make_base_variant(const TrainConfig& cfg) {
  FlowVariant v;
  v.cfg = cfg;
  v.net = std::make_unique<model::VectorFieldNet<float>>(cfg.net, derive_seed(cfg.seed, "net"));
  v.codec = make_patch_codec(cfg);
  return v;
}

inline const char* kCheckpointSubdir = "checkpoints/final";

/// Stage-2 variant: base network (and patch codec) from the stage-1
/// checkpoint, fresh adapters, and a fresh r-space codec unless disabled.
inline FlowVariant make_adapted_variant(const TrainConfig& cfg) {
  if (cfg.base_checkpoint.empty()) throw DependencyError("stage 2 needs flow.base_checkpoint (a stage-1 checkpoint)");
  if (!fs::exists(fs::path(cfg.base_checkpoint) / "manifest.json"))
    throw DependencyError("stage-1 checkpoint not found: " + cfg.base_checkpoint);
  const auto meta = ckpt::read_meta(cfg.base_checkpoint);
  if (meta.value("stage", -1) != 1) throw DependencyError(cfg.base_checkpoint + " is not a stage-1 checkpoint");
  const TrainConfig base_cfg = TrainConfig::from_config(Config::parse(meta.at("config").get<std::string>()));
  if (!(base_cfg.net == cfg.net)) throw DependencyError("stage-1 checkpoint architecture differs from this configuration");

  FlowVariant v;
  v.cfg = cfg;
  v.net = std::make_unique<model::VectorFieldNet<float>>(cfg.net, derive_seed(cfg.seed, "net"));
  auto patch = std::make_unique<rspace::PatchCodec<float>>(3, base_cfg.codec_stages, cfg.net.latent_channels, 0);
  auto base = v.net->base_params();
  for (auto* p : patch->params()) base.push_back(p);
  ckpt::load(cfg.base_checkpoint, base);
  v.net->attach_adapters(cfg.lora, derive_seed(cfg.seed, "lora"));
  if (cfg.rspace)
    v.codec = std::make_unique<rspace::RSpaceCodec<float>>(cfg.codec_config(), derive_seed(cfg.seed, "codec"));
  else
    v.codec = std::move(patch);
  return v;
}

inline nlohmann::json checkpoint_meta(const TrainConfig& cfg) {
  const Config c = cfg.to_config();
  return {{"stage", cfg.stage},
          {"config", c.serialize()},
          {"config_hash", std::to_string(c.hash())},
          {"seed", cfg.seed},
          {"path", flow::to_string(cfg.path)},
          {"arch",
           {{"latent_channels", cfg.net.latent_channels},
            {"width", cfg.net.width},
            {"depth", cfg.net.depth},
            {"heads", cfg.net.heads}}},
          {"lora", {{"rank", cfg.lora.rank}, {"alpha", cfg.lora.alpha}}}};
}

/// Rebuilds a saved stage-1 or stage-2 variant.
inline FlowVariant load_variant(const fs::path& dir) {
  const auto meta = ckpt::read_meta(dir);
  const int stage = meta.value("stage", -1);
  if (stage != 1 && stage != 2) throw DependencyError(dir.string() + " is not a flow checkpoint");
  TrainConfig cfg = TrainConfig::from_config(Config::parse(meta.at("config").get<std::string>()));
  FlowVariant v;
  v.cfg = cfg;
  v.net = std::make_unique<model::VectorFieldNet<float>>(cfg.net, 0);
  if (stage == 2) {
    v.net->attach_adapters(cfg.lora, 0);
    if (cfg.rspace) v.codec = std::make_unique<rspace::RSpaceCodec<float>>(cfg.codec_config(), 0);
  }
  if (!v.codec) v.codec = make_patch_codec(cfg);
  ckpt::load(dir, v.all_params());
  return v;
}

inline std::shared_ptr<expert::ToyRestorer> load_restorer(const fs::path& dir) {
  const auto meta = ckpt::read_meta(dir);
  if (meta.value("stage", -1) != 0) throw DependencyError(dir.string() + " is not a stage-0 checkpoint");
  const TrainConfig cfg = TrainConfig::from_config(Config::parse(meta.at("config").get<std::string>()));
  auto r = std::make_shared<expert::ToyRestorer>(cfg.expert_codec_config(), 0);
  ckpt::load(dir, r->params());
  return r;
}

/// Resolves an expert id against a dataset and the configured checkpoints.
inline std::shared_ptr<const expert::FidelityExpert> make_expert(const std::string& id, const TrainConfig& cfg) {
  if (id == "identity" || id == "none") return std::make_shared<expert::IdentityExpert>();
  if (id == "wiener") {
    auto manifest = std::make_shared<degrade::Manifest>(degrade::read_manifest(cfg.dataset));
    return std::make_shared<expert::WienerExpert>(
        [manifest](std::string_view image_id) {
          const auto& e = manifest->find(std::string(image_id));
          return degrade::kernel_from_seed(manifest->kernels, e.kernel_kind, e.kernel_seed);
        },
        cfg.wiener_nsr);
  }
  if (id == "toy-restorer") {
    if (cfg.expert_checkpoint.empty() || !fs::exists(fs::path(cfg.expert_checkpoint) / "manifest.json"))
      throw DependencyError("toy-restorer expert needs a stage-0 checkpoint (flow.expert_checkpoint)");
    return std::make_shared<expert::ToyRestorerExpert>(load_restorer(cfg.expert_checkpoint));
  }
  throw NotFound("unknown fidelity expert: " + id);
}

inline std::vector<Image> restore_all(const expert::FidelityExpert& e, const std::vector<ImagePair>& pairs) {
  std::vector<Image> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(e.restore(p.blur, p.id));
  return out;
}

/// One training example: matching crops of the sharp image, the blur and
/// (when available) the expert estimate.
struct Example {
  Image sharp, blur, estimate;
  std::uint64_t seed = 0;
};

inline Example make_example(const ImagePair& p, const Image* estimate, int crop_size, std::uint64_t seed) {
  Example ex;
  ex.seed = seed;
  const int ch = std::min(crop_size, p.sharp.height()), cw = std::min(crop_size, p.sharp.width());
  Rng rng(derive_seed(seed, "crop"));
  const int y0 = static_cast<int>(rng.uniform_int(0, p.sharp.height() - ch));
  const int x0 = static_cast<int>(rng.uniform_int(0, p.sharp.width() - cw));
  ex.sharp = crop(p.sharp, y0, x0, ch, cw);
  ex.blur = crop(p.blur, y0, x0, ch, cw);
  if (estimate) ex.estimate = crop(*estimate, y0, x0, ch, cw);
  return ex;
}

struct StageResult {
  RunRecord record;
  fs::path run_dir;
  fs::path checkpoint;
};

namespace detail {

struct ExampleLoss {
  double loss = 0;
  double baseline = 0;  // zero-predictor loss on the same target
  int full = -1;        // co-training draw: 1 full degradation, 0 expert pair, -1 none
};

struct LoopHooks {
  std::function<ExampleLoss(const Example&, double grad_scale)> example_loss;
  std::function<std::pair<double, double>()> validate;                                      // (val_loss, val_psnr)
};

inline RunRecord run_loop(const TrainConfig& cfg, const std::vector<ImagePair>& train, const std::vector<Image>* estimates,
                          const nn::ParamList<float>& params, const LoopHooks& hooks) {
  if (train.empty()) throw NotFound("training split is empty");
  RunRecord rec;
  rec.config_hash = cfg.to_config().hash();
  rec.grad_clip = cfg.grad_clip;
  rec.eps = cfg.optim.eps;
  const long n = static_cast<long>(train.size());
  const long per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * per_epoch;
  AdamW<float> opt(cfg.optim);
  const auto t0 = std::chrono::steady_clock::now();
  long step = 0, full_draws = 0, draws = 0;
  for (int epoch = 0; step < total; ++epoch) {
    std::vector<long> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle(derive_seed(derive_seed(cfg.seed, "order"), static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle.engine());
    double epoch_loss = 0;
    long epoch_steps = 0;
    double lr = cfg.optim.lr;
    for (long b = 0; b < per_epoch && step < total; ++b, ++step) {
      nn::zero_grads(params);
      const long lo = b * cfg.batch, hi = std::min(n, lo + cfg.batch);
      const double scale = 1.0 / static_cast<double>(hi - lo);
      double loss = 0, base = 0;
      for (long k = lo; k < hi; ++k) {
        const long idx = order[static_cast<size_t>(k)];
        const auto seed = derive_seed(derive_seed(cfg.seed, "example"), static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(k - lo));
        const Example ex = make_example(train[static_cast<size_t>(idx)], estimates ? &(*estimates)[static_cast<size_t>(idx)] : nullptr, cfg.crop, seed);
        const ExampleLoss r = hooks.example_loss(ex, scale);
        if (!std::isfinite(r.loss)) throw NumericFailure("non-finite training loss in epoch " + std::to_string(epoch), step);
        loss += r.loss * scale;
        base += r.baseline * scale;
        if (r.full >= 0) {
          ++draws;
          full_draws += r.full;
        }
      }
      const double gnorm = clip_grad_norm(params, cfg.grad_clip);
      if (!std::isfinite(gnorm)) throw NumericFailure("non-finite gradient norm in epoch " + std::to_string(epoch), step);
      lr = cosine_lr(cfg.optim.lr, step, total, cfg.lr_floor);
      opt.step(params, lr);
      rec.steps.push_back({step, loss, base, lr, gnorm});
      epoch_loss += loss;
      ++epoch_steps;
    }
    const auto [vl, vp] = hooks.validate();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back({epoch, step, epoch_loss / static_cast<double>(std::max<long>(1, epoch_steps)), vl, vp, wall, lr});
  }
  if (rec.epochs.empty()) {
    const auto [vl, vp] = hooks.validate();
    rec.epochs.push_back({0, 0, 0.0, vl, vp, 0.0, cfg.optim.lr});
  }
  rec.full_degradation_fraction = draws ? static_cast<double>(full_draws) / static_cast<double>(draws) : 0.0;
  return rec;
}

inline double zero_baseline(const Tensor3<float>& target) {
  return flow::mean_squared_error(target, Tensor3<float>(target.shape()));
}

}  // namespace detail

/// Writes the run directory atomically: `<root>/.<name>.partial` is renamed
/// to `<root>/<name>` once everything is on disk.
inline StageResult finalize_run(const TrainConfig& cfg, RunRecord rec, const nn::ParamList<float>& params, const fs::path& root) {
  const fs::path partial = root / ("." + cfg.name + ".partial");
  const fs::path final_dir = root / cfg.name;
  fs::remove_all(partial);
  fs::create_directories(partial / "checkpoints");
  rec.checkpoint = (final_dir / kCheckpointSubdir).string();
  ckpt::save(partial / kCheckpointSubdir, params, checkpoint_meta(cfg));
  cfg.to_config().save((partial / "config.cfg").string());
  std::ofstream(partial / "record.csv") << rec.csv();
  std::ofstream(partial / "steps.csv") << rec.steps_csv();
  fs::remove_all(final_dir);
  fs::rename(partial, final_dir);
  return {std::move(rec), final_dir, final_dir / kCheckpointSubdir};
}

inline StageResult train_stage0(const TrainConfig& cfg, const fs::path& root) {
  const auto train = degrade::load_split(cfg.dataset, "train");
  const auto val = degrade::load_split(cfg.dataset, "val");
  expert::ToyRestorer restorer(cfg.expert_codec_config(), derive_seed(cfg.seed, "expert"));
  const auto params = restorer.params();
  apply_mask(params, freeze_mask(0, params));
  detail::LoopHooks hooks;
  hooks.example_loss = [&](const Example& ex, double scale) {
    const auto y = ex.blur.cast<float>(), x = ex.sharp.cast<float>();
    return detail::ExampleLoss{restorer.loss(y, x, scale), detail::zero_baseline(y - x)};
  };
  hooks.validate = [&]() {
    double l = 0, p = 0;
    for (const auto& v : val) {
      l += restorer.loss(v.blur.cast<float>(), v.sharp.cast<float>());
      p += eval::psnr(restorer.restore(v.blur), v.sharp);
    }
    const double k = val.empty() ? 0.0 : 1.0 / static_cast<double>(val.size());
    return std::pair{l * k, p * k};
  };
  return finalize_run(cfg, detail::run_loop(cfg, train, nullptr, params, hooks), params, root);
}

inline StageResult train_stage1(const TrainConfig& cfg, const fs::path& root) {
  const auto train = degrade::load_split(cfg.dataset, "train");
  const auto val = degrade::load_split(cfg.dataset, "val");
  FlowVariant v = make_base_variant(cfg);
  const auto params = v.all_params();
  apply_mask(params, freeze_mask(1, params));
  detail::LoopHooks hooks;
  hooks.example_loss = [&](const Example& ex, double scale) {
    const double t = flow::draw_time(cfg.time_schedule, derive_seed(ex.seed, "t"));
    const auto o = rspace::build_objective<float>(flow::PathKind::kGenNoiseToClean, ex.sharp, ex.sharp, t, derive_seed(ex.seed, "noise"));
    return detail::ExampleLoss{rspace::latent_loss(*v.codec, *v.net, o, scale), detail::zero_baseline(o.target)};
  };
  hooks.validate = [&]() {
    double l = 0, p = 0;
    const double t = 0.5;
    for (size_t i = 0; i < val.size(); ++i) {
      const auto o = rspace::build_objective<float>(flow::PathKind::kGenNoiseToClean, val[i].sharp, val[i].sharp, t, derive_seed(derive_seed(cfg.seed, "val"), i));
      const auto pred = rspace::predict_field(*v.codec, *v.net, o.input, t);
      l += flow::mean_squared_error(pred, o.target);
      p += eval::psnr(clip01((o.input - static_cast<float>(t) * pred).cast<double>()), val[i].sharp);
    }
    const double k = val.empty() ? 0.0 : 1.0 / static_cast<double>(val.size());
    return std::pair{l * k, p * k};
  };
  return finalize_run(cfg, detail::run_loop(cfg, train, nullptr, params, hooks), params, root);
}

inline StageResult train_stage2(const TrainConfig& cfg, const fs::path& root) {
  FlowVariant v = make_adapted_variant(cfg);
  const auto expert_model = make_expert(cfg.expert, cfg);
  const auto train = degrade::load_split(cfg.dataset, "train");
  const auto val = degrade::load_split(cfg.dataset, "val");
  const auto train_est = restore_all(*expert_model, train);
  const auto val_est = restore_all(*expert_model, val);
  const auto params = v.all_params();
  apply_mask(params, freeze_mask(2, params));
  const expert::CoTrainConfig cot{cfg.rho, cfg.expert, cfg.seed};
  auto model = v.flow();
  detail::LoopHooks hooks;
  hooks.example_loss = [&](const Example& ex, double scale) {
    const ImagePair crop_pair = deblurflow::make_pair("crop", ex.sharp, ex.blur);
    const auto draw = expert::draw_training_pair(cot, crop_pair, ex.estimate, ex.seed);
    const double t = flow::draw_time(cfg.time_schedule, derive_seed(ex.seed, "t"));
    const auto o = rspace::build_objective<float>(cfg.path, *draw.x, *draw.start, t, derive_seed(ex.seed, "noise"));
    return detail::ExampleLoss{rspace::latent_loss(*v.codec, *v.net, o, scale), detail::zero_baseline(o.target), draw.full_degradation ? 1 : 0};
  };
  const expert::SamplerConfig scfg{cfg.val_steps, 1.0, cfg.expert};
  hooks.validate = [&]() {
    double l = 0, p = 0;
    for (size_t i = 0; i < val.size(); ++i) {
      const auto o = rspace::build_objective<float>(cfg.path, val[i].sharp, val_est[i], 0.5, derive_seed(derive_seed(cfg.seed, "val"), i));
      l += rspace::latent_loss(*v.codec, *v.net, o);
      p += eval::psnr(expert::sample(model, scfg, val_est[i], derive_seed(derive_seed(cfg.seed, "val-noise"), i)).output, val[i].sharp);
    }
    const double k = val.empty() ? 0.0 : 1.0 / static_cast<double>(val.size());
    return std::pair{l * k, p * k};
  };
  return finalize_run(cfg, detail::run_loop(cfg, train, &train_est, params, hooks), params, root);
}

/// Runs one training stage and writes `<root>/<name>/{config.cfg, record.csv,
/// steps.csv, checkpoints/final}`.
inline StageResult train_stage(const TrainConfig& cfg, const fs::path& root = runs_root()) {
  cfg.validate();
  fs::create_directories(root);
  switch (cfg.stage) {
    case 0: return train_stage0(cfg, root);
    case 1: return train_stage1(cfg, root);
    case 2: return train_stage2(cfg, root);
  }
  throw InvalidArgument("unknown training stage " + std::to_string(cfg.stage));
}

/// Parses `record.csv` and `steps.csv` from a finished run directory.
inline RunRecord read_record(const fs::path& run_dir) {
  std::ifstream in(run_dir / "record.csv");
  if (!in) throw DependencyError("run record not found: " + (run_dir / "record.csv").string());
  RunRecord rec;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = Config::split(line, ',');
    if (f.size() != 11) continue;
    rec.epochs.push_back({std::stoi(f[0]), std::stol(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6])});
    rec.config_hash = std::stoull(f[7]);
    rec.checkpoint = f[8];
    rec.grad_clip = std::stod(f[9]);
    rec.eps = std::stod(f[10]);
  }
  std::ifstream st(run_dir / "steps.csv");
  std::getline(st, line);
  while (std::getline(st, line)) {
    const auto f = Config::split(line, ',');
    if (f.size() == 5) rec.steps.push_back({std::stol(f[0]), std::stod(f[1]), std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return rec;
}

/// Reuses `<root>/<name>` when it holds a finished run of the identical
/// configuration; trains otherwise.
inline StageResult train_or_reuse(const TrainConfig& cfg, const fs::path& root = runs_root()) {
  const fs::path dir = root / cfg.name;
  const fs::path ck = dir / kCheckpointSubdir;
  if (fs::exists(ck / "manifest.json") && fs::exists(dir / "record.csv")) {
    const auto meta = ckpt::read_meta(ck);
    if (meta.value("config_hash", std::string()) == std::to_string(cfg.to_config().hash())) return {read_record(dir), dir, ck};
  }
  return train_stage(cfg, root);
}

}  // namespace deblurflow::train

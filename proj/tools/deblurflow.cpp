// deblurflow: dataset building, staged training, sampling, evaluation and
// the ablation drivers.
//
// Exit codes: 0 ok, 1 failed check or internal error, 2 usage /
// invalid argument, 3 missing dependency, 4 numeric failure.

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "deblurflow/eval/report.hpp"
#include "deblurflow/rspace/macs.hpp"

namespace fs = std::filesystem;
using namespace deblurflow;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  long seed = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "structured-text config file");
  cmd->add_option("--set", c.overrides, "key=value override (repeatable)");
  cmd->add_option("--seed", c.seed, "master seed");
}

/// defaults <- file <- overrides <- --seed
train::TrainConfig effective_config(const Common& c) {
  Config cfg = train::TrainConfig{}.to_config();
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw NotFound("config file not found: " + c.config);
    cfg.merge(Config::load(c.config));
  }
  cfg.apply_overrides(c.overrides);
  if (c.seed >= 0) cfg.set("run.seed", std::to_string(c.seed));
  return train::TrainConfig::from_config(cfg);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& p : Config::split(s, ',')) {
    try {
      out.push_back(std::stod(p));
    } catch (const std::exception&) {
      throw InvalidArgument("not a number: " + p);
    }
  }
  if (out.empty()) throw InvalidArgument("empty list");
  return out;
}

void print_path(const std::string& what, const fs::path& p) { std::cout << what << ": " << p.string() << "\n"; }

eval::EvalSet load_eval_set(const train::TrainConfig& cfg, const std::string& split) {
  const auto e = train::make_expert(cfg.expert, cfg);
  return eval::make_eval_set(*e, degrade::load_split(cfg.dataset, split), split);
}

/// Writes `text` to `<runs>/<name>/<file>` via a partial directory, echoing
/// the effective config next to it.
fs::path write_report_dir(const std::string& name, const train::TrainConfig& cfg,
                          const std::vector<std::pair<std::string, std::string>>& files) {
  const fs::path root = train::runs_root();
  const fs::path partial = root / ("." + name + ".partial"), dir = root / name;
  fs::remove_all(partial);
  fs::create_directories(partial);
  cfg.to_config().save((partial / "config.cfg").string());
  for (const auto& [f, text] : files) std::ofstream(partial / f) << text;
  fs::remove_all(dir);
  fs::rename(partial, dir);
  return dir;
}

int cmd_make_data(const std::string& out, const std::string& sources, int count, int size, const std::vector<double>& ratios,
                  const Common& c) {
  if (fs::exists(fs::path(out) / "manifest.csv")) throw InvalidArgument("dataset already exists at " + out);
  Config kc = degrade::kernel_spec_config(degrade::KernelSpec{}, degrade::Boundary::kReflect);
  if (!c.config.empty()) kc.merge(Config::load(c.config));
  kc.apply_overrides(c.overrides);
  const auto spec = degrade::kernel_spec_from_config(kc);
  const auto boundary = degrade::parse_boundary(kc.get_string("kernels.boundary", "reflect"));
  const std::uint64_t seed = c.seed >= 0 ? static_cast<std::uint64_t>(c.seed) : 1;
  const auto src = sources.empty() ? degrade::synthesize_sources(count, size, 3, seed) : degrade::load_sources(sources);
  auto m = degrade::build_dataset(src, spec, ratios, seed);
  m.boundary = boundary;
  const fs::path tmp = fs::path(out).string() + ".partial";
  fs::remove_all(tmp);
  degrade::write_dataset(tmp, src, m);
  fs::remove_all(out);
  fs::rename(tmp, out);
  for (const auto& s : degrade::split_names()) std::cout << s << ": " << m.count(s) << " pairs\n";
  print_path("dataset", out);
  print_path("manifest", fs::path(out) / "manifest.csv");
  return 0;
}

int cmd_train(int stage, const std::string& name, const Common& c) {
  auto cfg = effective_config(c);
  if (stage >= 0) cfg.stage = stage;
  if (!name.empty()) cfg.name = name;
  const auto r = train::train_stage(cfg);
  const auto& last = r.record.last();
  std::cout << "stage " << cfg.stage << ": " << r.record.steps.size() << " steps, final train loss " << last.train_loss
            << ", val loss " << last.val_loss << ", val PSNR " << last.val_psnr << " dB\n";
  print_path("run", r.run_dir);
  print_path("config", r.run_dir / "config.cfg");
  print_path("record", r.run_dir / "record.csv");
  print_path("checkpoint", r.checkpoint);
  return 0;
}

int cmd_sample(const std::string& checkpoint, const std::string& input, const std::string& split, int steps,
               const std::string& out, bool trajectory, const Common& c) {
  expert::SamplerConfig{steps, 1.0, ""}.validate();
  if (checkpoint.empty()) throw InvalidArgument("sample needs --checkpoint");
  train::FlowVariant v = train::load_variant(checkpoint);
  Config over = v.cfg.to_config();
  over.apply_overrides(c.overrides);
  v.cfg = train::TrainConfig::from_config(over);
  const auto e = train::make_expert(v.cfg.expert, v.cfg);
  const fs::path dir = out.empty() ? train::runs_root() / (v.cfg.name + "-samples") : fs::path(out);
  fs::create_directories(dir);
  auto model = v.flow();
  const std::uint64_t seed = c.seed >= 0 ? static_cast<std::uint64_t>(c.seed) : v.cfg.seed;
  std::vector<std::pair<std::string, Image>> inputs;
  if (!input.empty())
    inputs.emplace_back(fs::path(input).stem().string(), read_png(input));
  else
    for (auto& p : degrade::load_split(v.cfg.dataset, split)) inputs.emplace_back(p.id, p.blur);
  for (size_t i = 0; i < inputs.size(); ++i) {
    const auto& [id, y] = inputs[i];
    const Image start = e->restore(y, id);
    const auto r = expert::sample(model, {steps, 1.0, v.cfg.expert}, start, eval::sample_seed(seed, i));
    write_png((dir / (id + ".png")).string(), r.output);
    print_path("output", dir / (id + ".png"));
    if (trajectory) {
      expert::write_trajectory_strip(dir / (id + "_trajectory.png"), r.trajectory);
      print_path("trajectory", dir / (id + "_trajectory.png"));
    }
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& split, int steps, const std::string& out, bool save_images,
             const Common& c) {
  expert::SamplerConfig{steps, 1.0, ""}.validate();
  std::vector<eval::MetricReport> reports;
  train::TrainConfig cfg;
  std::optional<train::FlowVariant> v;
  if (!checkpoint.empty()) {
    v = train::load_variant(checkpoint);
    Config over = v->cfg.to_config();
    over.apply_overrides(c.overrides);
    v->cfg = train::TrainConfig::from_config(over);
    cfg = v->cfg;
  } else {
    cfg = effective_config(c);
  }
  const auto set = load_eval_set(cfg, split);
  reports.push_back(eval::evaluate_blur(set));
  reports.push_back(eval::evaluate_expert(set, "expert-" + cfg.expert));
  const std::string name = (v ? cfg.name : "expert-" + cfg.expert) + "-eval";
  std::optional<fs::path> img_dir;
  if (save_images) img_dir = train::runs_root() / (name + "-images");
  if (v) reports.push_back(eval::evaluate_variant(*v, set, steps, cfg.name, c.seed >= 0 ? c.seed : cfg.seed, img_dir));
  for (const auto& r : reports) std::printf("%-28s PSNR %7.3f dB  SSIM %.4f\n", r.method.c_str(), r.mean_psnr(), r.mean_ssim());
  const std::string csv = eval::reports_csv(reports);
  if (!out.empty()) {
    eval::write_text(out, csv);
    print_path("report", out);
  } else {
    print_path("report", write_report_dir(name, cfg, {{"report.csv", csv}}) / "report.csv");
  }
  if (img_dir) print_path("images", *img_dir);
  return 0;
}

train::StageResult variant(train::TrainConfig cfg, const std::string& suffix) {
  cfg.name += "-" + suffix;
  cfg.stage = 2;
  const auto r = train::train_or_reuse(cfg);
  print_path("variant " + suffix, r.checkpoint);
  return r;
}

int cmd_ablate_paths(int steps, double margin, const Common& c) {
  const auto cfg = effective_config(c);
  std::map<flow::PathKind, fs::path> ck;
  for (auto kind : {flow::PathKind::kDeblurBlurToClean, flow::PathKind::kNoiseToResidual, flow::PathKind::kGenNoiseToClean}) {
    auto vc = cfg;
    vc.path = kind;
    ck[kind] = variant(vc, flow::to_string(kind)).checkpoint;
  }
  const auto set = load_eval_set(cfg, "test");
  const auto study = eval::run_table4(ck, set, steps, margin, cfg.seed);
  for (const auto& r : study.reports) std::printf("%-22s PSNR %7.3f dB  SSIM %.4f\n", r.method.c_str(), r.mean_psnr(), r.mean_ssim());
  std::cout << "ordering: " << study.ordering.diagnostic << "\n";
  const auto dir = write_report_dir(cfg.name + "-paths", cfg, {{"report.csv", eval::reports_csv(study.reports)}});
  print_path("report", dir / "report.csv");
  return study.ordering.holds ? 0 : 1;
}

int cmd_ablate_modules(int steps, const Common& c) {
  const auto cfg = effective_config(c);
  auto gen = cfg, plain = cfg, full = cfg;
  gen.path = flow::PathKind::kGenNoiseToClean;
  plain.path = full.path = flow::PathKind::kDeblurBlurToClean;
  plain.rspace = false;
  const auto rg = variant(gen, "generative"), rp = variant(plain, "no-rspace"), rf = variant(full, "full");
  const auto set = load_eval_set(cfg, "test");
  const auto m = eval::run_table6(rg.checkpoint, rp.checkpoint, rf.checkpoint, set, steps, cfg.seed);
  for (const auto& r : m.reports()) std::printf("%-22s PSNR %7.3f dB  SSIM %.4f\n", r.method.c_str(), r.mean_psnr(), r.mean_ssim());
  std::printf("collapse %.3f dB, full gap %.3f dB, collapse-and-recovery pattern %s\n", m.collapse_db, m.full_gap_db,
              m.collapse_recovery ? "holds" : "does not hold");
  const auto dir = write_report_dir(cfg.name + "-modules", cfg, {{"report.csv", eval::reports_csv(m.reports())}});
  print_path("report", dir / "report.csv");
  return 0;
}

int cmd_ablate_steps(const std::string& checkpoint, const std::string& list, const Common& c) {
  if (checkpoint.empty()) throw InvalidArgument("ablate-steps needs --checkpoint");
  std::vector<int> steps;
  for (double s : parse_list(list)) {
    if (s != std::floor(s)) throw InvalidArgument("step counts must be integers");
    steps.push_back(static_cast<int>(s));
    expert::SamplerConfig{steps.back(), 1.0, ""}.validate();
  }
  train::FlowVariant v = train::load_variant(checkpoint);
  const auto set = load_eval_set(v.cfg, "test");
  const auto rows = eval::run_steps_study(v, set, steps, c.seed >= 0 ? c.seed : v.cfg.seed);
  for (const auto& r : rows) std::printf("N=%-3d PSNR %7.3f dB  SSIM %.4f\n", static_cast<int>(r.key), r.report.mean_psnr(), r.report.mean_ssim());
  const auto dir = write_report_dir(v.cfg.name + "-steps", v.cfg, {{"steps.csv", eval::sweep_csv("n_steps", rows)}});
  print_path("report", dir / "steps.csv");
  return 0;
}

int cmd_ablate_cotrain(const std::string& list, int steps, const Common& c) {
  const auto cfg = effective_config(c);
  const auto set = load_eval_set(cfg, "test");
  std::vector<eval::SweepRow> rows;
  for (double rho : parse_list(list)) {
    auto vc = cfg;
    vc.rho = rho;
    const auto r = variant(vc, "rho" + label_double(rho));
    train::FlowVariant v = train::load_variant(r.checkpoint);
    rows.push_back({rho, eval::evaluate_variant(v, set, steps, "rho=" + label_double(rho), cfg.seed)});
    std::printf("rho %.2f PSNR %7.3f dB  SSIM %.4f\n", rho, rows.back().report.mean_psnr(), rows.back().report.mean_ssim());
  }
  const bool ok = eval::non_increasing(rows);
  std::cout << "PSNR non-increasing in rho: " << (ok ? "yes" : "no") << "\n";
  const auto dir = write_report_dir(cfg.name + "-cotrain", cfg, {{"cotrain.csv", eval::sweep_csv("rho", rows)}});
  print_path("report", dir / "cotrain.csv");
  return ok ? 0 : 1;
}

int cmd_macs(int size, int baseline_width, const Common& c) {
  const auto cfg = effective_config(c);
  const Shape in{cfg.codec_config().in_channels, size, size};
  rspace::RSpaceCodec<float> codec(cfg.codec_config(), 0);
  const auto base = rspace::vspace_baseline_specs({3, size, size}, baseline_width, cfg.net.latent_channels);
  const auto r = rspace::mac_cost(codec.layer_specs(in));
  const auto b = rspace::mac_cost(base);
  model::VectorFieldNet<float> net(cfg.net, 0);
  const auto n = rspace::mac_cost(net, codec.latent_shape(in));
  std::printf("input %dx%d\n", size, size);
  std::printf("r-space codec      %14lld MACs (%.4f GMACs)\n", static_cast<long long>(r), r * 1e-9);
  std::printf("v-space baseline   %14lld MACs (%.4f GMACs)\n", static_cast<long long>(b), b * 1e-9);
  std::printf("vector-field net   %14lld MACs per step\n", static_cast<long long>(n));
  std::printf("codec reduction    %.2fx\n", static_cast<double>(b) / static_cast<double>(r));
  return 0;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kUnsupported: return 2;
    case ErrorKind::kDependency:
    case ErrorKind::kNotFound: return 3;
    case ErrorKind::kNumericFailure: return 4;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deblurflow: deblurring flow models at desk scale"};
  app.require_subcommand(1);

  Common c;
  std::string out, sources, checkpoint, input, split = "test", name, list, ratios = "0.7,0.1,0.2";
  int count = 200, size = 64, stage = -1, steps = 1, width = 64;
  bool trajectory = false, images = false;
  double margin = 0.3;

  auto* mk = app.add_subcommand("make-data", "synthesize or import sharp images and build blurred pairs");
  add_common(mk, c);
  mk->add_option("--out", out, "dataset directory")->required();
  mk->add_option("--sources", sources, "directory of sharp PNGs (default: synthetic)");
  mk->add_option("--count", count, "synthetic image count")->check(CLI::PositiveNumber);
  mk->add_option("--size", size, "synthetic image size")->check(CLI::PositiveNumber);
  mk->add_option("--split", ratios, "train,val,test ratios");

  auto* tr = app.add_subcommand("train", "train one stage (0 restorer, 1 base, 2 adaptation)");
  add_common(tr, c);
  tr->add_option("--stage", stage, "stage id");
  tr->add_option("--name", name, "run name");

  auto* sm = app.add_subcommand("sample", "refine expert estimates with a trained variant");
  add_common(sm, c);
  sm->add_option("--checkpoint", checkpoint, "stage-1 or stage-2 checkpoint directory");
  sm->add_option("--input", input, "single blurred PNG");
  sm->add_option("--split", split, "dataset split when no --input is given");
  sm->add_option("--steps", steps, "Euler steps (>= 1)");
  sm->add_option("--out", out, "output directory");
  sm->add_flag("--trajectory", trajectory, "also write the trajectory strip");

  auto* ev = app.add_subcommand("eval", "PSNR/SSIM report for blur, expert and (optionally) a variant");
  add_common(ev, c);
  ev->add_option("--checkpoint", checkpoint, "flow checkpoint (omit for expert only)");
  ev->add_option("--split", split, "dataset split");
  ev->add_option("--steps", steps, "Euler steps (>= 1)");
  ev->add_option("--out", out, "report CSV path");
  ev->add_flag("--images", images, "write sampled images");

  auto* ap = app.add_subcommand("ablate-paths", "train and compare the three flow paths");
  add_common(ap, c);
  ap->add_option("--steps", steps, "Euler steps");
  ap->add_option("--margin", margin, "required PSNR gap between ranks (dB)");

  auto* am = app.add_subcommand("ablate-modules", "expert-only vs generative flow vs residual flow vs full");
  add_common(am, c);
  am->add_option("--steps", steps, "Euler steps");

  auto* as = app.add_subcommand("ablate-steps", "sample one variant with several step counts");
  add_common(as, c);
  as->add_option("--checkpoint", checkpoint, "stage-2 checkpoint");
  as->add_option("--steps", list, "comma list of step counts")->default_val("1,3,5,10,20");

  auto* ac = app.add_subcommand("ablate-cotrain", "train one variant per co-training ratio");
  add_common(ac, c);
  ac->add_option("--ratios", list, "comma list of rho values")->default_val("0,0.3,0.5,0.7,1.0");
  ac->add_option("--steps", steps, "Euler steps");

  auto* mc = app.add_subcommand("macs", "codec multiply-accumulate counts vs the v-space baseline");
  add_common(mc, c);
  mc->add_option("--size", size, "input size")->check(CLI::PositiveNumber);
  mc->add_option("--baseline-width", width, "baseline base width")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*mk) return cmd_make_data(out, sources, count, size, parse_list(ratios), c);
    if (*tr) return cmd_train(stage, name, c);
    if (*sm) return cmd_sample(checkpoint, input, split, steps, out, trajectory, c);
    if (*ev) return cmd_eval(checkpoint, split, steps, out, images, c);
    if (*ap) return cmd_ablate_paths(steps, margin, c);
    if (*am) return cmd_ablate_modules(steps, c);
    if (*as) return cmd_ablate_steps(checkpoint, list, c);
    if (*ac) return cmd_ablate_cotrain(list, steps, c);
    if (*mc) return cmd_macs(size, width, c);
  } catch (const Error& e) {
    std::cerr << "deblurflow: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "deblurflow: internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

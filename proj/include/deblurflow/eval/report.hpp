#pragma once

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "deblurflow/core/png_io.hpp"
#include "deblurflow/eval/metrics.hpp"
#include "deblurflow/train/trainer.hpp"

namespace deblurflow::eval {

namespace fs = std::filesystem;

struct MetricRow {
  std::string image;
  double psnr = 0;
  double ssim = 0;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

/// Per-image PSNR/SSIM for one method on one split.
struct MetricReport {
  std::string method;
  std::string split = "test";
  int n_steps = 0;
  std::string timestamp = utc_timestamp();
  std::vector<MetricRow> rows;

  void add(std::string image, const Image& output, const Image& reference) {
    rows.push_back({std::move(image), psnr(output, reference), ssim(output, reference)});
  }

  double mean_psnr() const { return mean(&MetricRow::psnr); }
  double mean_ssim() const { return mean(&MetricRow::ssim); }

  /// `method,split,n_steps,psnr,ssim,image`, one row per image and a final
  /// aggregate row whose image column is `mean`.
  std::string csv(bool header = true) const {
    std::ostringstream out;
    out.precision(10);
    if (header) out << "method,split,n_steps,psnr,ssim,image\n";
    for (const auto& r : rows) out << method << "," << split << "," << n_steps << "," << r.psnr << "," << r.ssim << "," << r.image << "\n";
    out << method << "," << split << "," << n_steps << "," << mean_psnr() << "," << mean_ssim() << ",mean\n";
    return out.str();
  }

 private:
  double mean(double MetricRow::*field) const {
    if (rows.empty()) throw InvalidArgument("report for " + method + " has no images");
    double acc = 0;
    for (const auto& r : rows) acc += r.*field;
    return acc / static_cast<double>(rows.size());
  }
};

inline void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  std::ofstream(tmp) << text;
  fs::rename(tmp, file);
}

inline std::string reports_csv(const std::vector<MetricReport>& reports) {
  std::string out = "method,split,n_steps,psnr,ssim,image\n";
  for (const auto& r : reports) out += r.csv(false);
  return out;
}

/// Inputs shared by every evaluation: the pairs and their expert estimates.
struct EvalSet {
  std::string split = "test";
  std::vector<ImagePair> pairs;
  std::vector<Image> estimates;  // f(y), aligned with pairs
};

inline EvalSet make_eval_set(const expert::FidelityExpert& e, std::vector<ImagePair> pairs, std::string split = "test") {
  if (pairs.empty()) throw NotFound("evaluation split " + split + " is empty");
  EvalSet s;
  s.split = std::move(split);
  s.estimates = train::restore_all(e, pairs);
  s.pairs = std::move(pairs);
  return s;
}

inline MetricReport evaluate_expert(const EvalSet& set, const std::string& method = "expert-only") {
  MetricReport r;
  r.method = method;
  r.split = set.split;
  for (size_t i = 0; i < set.pairs.size(); ++i) r.add(set.pairs[i].id, set.estimates[i], set.pairs[i].sharp);
  return r;
}

inline MetricReport evaluate_blur(const EvalSet& set) {
  MetricReport r;
  r.method = "blurred-input";
  r.split = set.split;
  for (const auto& p : set.pairs) r.add(p.id, p.blur, p.sharp);
  return r;
}

inline std::uint64_t sample_seed(std::uint64_t seed, size_t image) { return derive_seed(derive_seed(seed, "eval-noise"), image); }

/// Samples every image from its expert estimate and scores the result.
/// When `out_dir` is set, outputs are written there as PNG.
inline MetricReport evaluate_variant(train::FlowVariant& v, const EvalSet& set, int steps, const std::string& method,
                                     std::uint64_t seed = 0, const std::optional<fs::path>& out_dir = std::nullopt) {
  const expert::SamplerConfig scfg{steps, 1.0, v.cfg.expert};
  scfg.validate();
  auto model = v.flow();
  MetricReport r;
  r.method = method;
  r.split = set.split;
  r.n_steps = steps;
  if (out_dir) fs::create_directories(*out_dir);
  for (size_t i = 0; i < set.pairs.size(); ++i) {
    const Image out = expert::sample(model, scfg, set.estimates[i], sample_seed(seed, i)).output;
    r.add(set.pairs[i].id, out, set.pairs[i].sharp);
    if (out_dir) write_png((*out_dir / (set.pairs[i].id + ".png")).string(), out);
  }
  return r;
}

/// Strict descending ordering of named scores with a minimum gap.
struct OrderingCheck {
  bool holds = false;
  std::string diagnostic;
};

inline OrderingCheck check_descending(const std::vector<std::pair<std::string, double>>& ranked, double margin) {
  OrderingCheck c{true, {}};
  std::ostringstream why;
  why.precision(4);
  why << std::fixed;
  for (size_t i = 0; i + 1 < ranked.size(); ++i) {
    const double gap = ranked[i].second - ranked[i + 1].second;
    if (!(gap >= margin)) {
      c.holds = false;
      why << ranked[i].first << " (" << ranked[i].second << " dB) should exceed " << ranked[i + 1].first << " ("
          << ranked[i + 1].second << " dB) by " << margin << " dB, gap " << gap << "; ";
    }
  }
  c.diagnostic = c.holds ? "ordering holds" : why.str();
  return c;
}

struct PathStudy {
  std::vector<MetricReport> reports;  // deblur, noise-to-residual, generative
  OrderingCheck ordering;
};

/// Path comparison: each checkpoint is a stage-2 variant trained on one path,
/// sampled from the expert estimate.
inline PathStudy run_table4(const std::map<flow::PathKind, fs::path>& checkpoints, const EvalSet& set, int steps, double margin,
                            std::uint64_t seed = 0) {
  PathStudy s;
  std::vector<std::pair<std::string, double>> ranked;
  for (auto kind : {flow::PathKind::kDeblurBlurToClean, flow::PathKind::kNoiseToResidual, flow::PathKind::kGenNoiseToClean}) {
    auto it = checkpoints.find(kind);
    if (it == checkpoints.end()) throw DependencyError("path study is missing the " + flow::to_string(kind) + " variant");
    train::FlowVariant v = train::load_variant(it->second);
    if (v.cfg.path != kind) throw DependencyError(it->second.string() + " was trained on " + flow::to_string(v.cfg.path));
    s.reports.push_back(evaluate_variant(v, set, steps, flow::to_string(kind), seed));
    ranked.emplace_back(flow::to_string(kind), s.reports.back().mean_psnr());
  }
  s.ordering = check_descending(ranked, margin);
  return s;
}

struct ModuleStudy {
  MetricReport expert_only, generative, residual_no_rspace, full;
  double collapse_db = 0;    // expert-only minus generative
  double full_gap_db = 0;    // expert-only minus full
  bool collapse_recovery = false;  // gen < no-rspace <= full <= expert + 0.5
  std::string diagnostic;

  std::vector<MetricReport> reports() const { return {expert_only, generative, residual_no_rspace, full}; }
};

/// Module ablation. `generative` is a stage-2 variant on the noise-to-clean
/// path, `no_rspace` a deblur-path variant over the frozen base codec, `full`
/// the deblur-path variant with the r-space codec.
inline ModuleStudy run_table6(const fs::path& generative, const fs::path& no_rspace, const fs::path& full, const EvalSet& set,
                              int steps, std::uint64_t seed = 0) {
  ModuleStudy m;
  m.expert_only = evaluate_expert(set);
  auto eval_ckpt = [&](const fs::path& dir, const std::string& name) {
    train::FlowVariant v = train::load_variant(dir);
    return evaluate_variant(v, set, steps, name, seed);
  };
  m.generative = eval_ckpt(generative, "expert+flow");
  m.residual_no_rspace = eval_ckpt(no_rspace, "expert+flow+residual");
  m.full = eval_ckpt(full, "full");
  const double e = m.expert_only.mean_psnr(), g = m.generative.mean_psnr(), r = m.residual_no_rspace.mean_psnr(),
               f = m.full.mean_psnr();
  m.collapse_db = e - g;
  m.full_gap_db = e - f;
  m.collapse_recovery = g < r && r <= f && f <= e + 0.5;
  std::ostringstream d;
  d.precision(3);
  d << std::fixed << "expert " << e << ", +flow " << g << ", +residual " << r << ", full " << f;
  m.diagnostic = d.str();
  return m;
}

struct SweepRow {
  double key = 0;  // rho or step count
  MetricReport report;
};

inline std::string sweep_csv(const std::string& key_name, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << key_name << ",method,split,n_steps,psnr,ssim\n";
  for (const auto& r : rows)
    out << r.key << "," << r.report.method << "," << r.report.split << "," << r.report.n_steps << "," << r.report.mean_psnr() << ","
        << r.report.mean_ssim() << "\n";
  return out.str();
}

/// Same trained variant sampled with each step count.
inline std::vector<SweepRow> run_steps_study(train::FlowVariant& v, const EvalSet& set, const std::vector<int>& steps,
                                             std::uint64_t seed = 0) {
  std::vector<SweepRow> rows;
  for (int n : steps) rows.push_back({static_cast<double>(n), evaluate_variant(v, set, n, "steps-" + std::to_string(n), seed)});
  return rows;
}

/// True when PSNR never rises as rho grows (rows sorted by rho).
inline bool non_increasing(std::vector<SweepRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.key < b.key; });
  for (size_t i = 0; i + 1 < rows.size(); ++i)
    if (rows[i + 1].report.mean_psnr() > rows[i].report.mean_psnr()) return false;
  return true;
}

}  // namespace deblurflow::eval

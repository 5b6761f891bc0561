#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "deblurflow/core/error.hpp"
#include "deblurflow/core/tensor.hpp"
#include "deblurflow/degrade/kernel.hpp"

namespace deblurflow::expert {

enum class ExpertKind { kIdentity, kWiener, kToyRestorer };

inline std::string to_string(ExpertKind k) {
  switch (k) {
    case ExpertKind::kIdentity: return "identity";
    case ExpertKind::kWiener: return "wiener";
    case ExpertKind::kToyRestorer: return "toy-restorer";
  }
  return "?";
}

/// A restoration model providing the initial estimate f(y). Implementations
/// are deterministic and shape-preserving. `image_id` lets experts that need
/// per-image side information (the Wiener filter's kernel) look it up.
class FidelityExpert {
 public:
  virtual ~FidelityExpert() = default;
  virtual ExpertKind kind() const = 0;
  virtual Image restore(const Image& y, std::string_view image_id = {}) const = 0;
};

class IdentityExpert final : public FidelityExpert {
 public:
  ExpertKind kind() const override { return ExpertKind::kIdentity; }
  Image restore(const Image& y, std::string_view = {}) const override { return y; }
};

/// Pads all four sides by mirroring, then fades the mirrored band toward the
/// channel mean with a raised cosine so the periodic extension has no seam.
inline Image reflect_pad_border(const Image& a, int p) {
  Image out(a.channels(), a.height() + 2 * p, a.width() + 2 * p);
  for (int c = 0; c < a.channels(); ++c) {
    double mean = 0;
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) mean += a(c, y, x);
    mean /= static_cast<double>(a.height()) * a.width();
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) {
        const int dy = std::max({0, p - y, y - (p + a.height() - 1)});
        const int dx = std::max({0, p - x, x - (p + a.width() - 1)});
        const double w = p > 0 ? 0.5 * (1.0 + std::cos(std::numbers::pi * std::max(dy, dx) / p)) : 1.0;
        out(c, y, x) = w * a(c, reflect_index(y - p, a.height()), reflect_index(x - p, a.width())) + (1.0 - w) * mean;
      }
  }
  return out;
}

/// Classical frequency-domain Wiener deconvolution with a known kernel:
/// X = conj(K) Y / (|K|^2 + nsr).
inline Image wiener_deconvolve(const Image& y, const degrade::BlurKernel& k, double nsr) {
  require(nsr > 0, "wiener noise-to-signal ratio must be positive");
  const int pad = k.size;
  const Image yp = reflect_pad_border(y, pad);
  const int H = yp.height(), W = yp.width(), Wc = W / 2 + 1;

  std::vector<double> spatial(static_cast<size_t>(H) * W);
  std::vector<std::complex<double>> kf(static_cast<size_t>(H) * Wc), yf(kf.size());
  auto* sp = spatial.data();
  auto* kp = reinterpret_cast<fftw_complex*>(kf.data());
  auto* yfp = reinterpret_cast<fftw_complex*>(yf.data());
  const fftw_plan fwd_k = fftw_plan_dft_r2c_2d(H, W, sp, kp, FFTW_ESTIMATE);
  const fftw_plan fwd_y = fftw_plan_dft_r2c_2d(H, W, sp, yfp, FFTW_ESTIMATE);
  const fftw_plan inv = fftw_plan_dft_c2r_2d(H, W, yfp, sp, FFTW_ESTIMATE);

  std::fill(spatial.begin(), spatial.end(), 0.0);
  const int r = k.radius();
  for (int a = 0; a < k.size; ++a)
    for (int b = 0; b < k.size; ++b) spatial[static_cast<size_t>((a - r + H) % H) * W + (b - r + W) % W] = k(a, b);
  fftw_execute(fwd_k);

  Image out(y.shape());
  for (int c = 0; c < y.channels(); ++c) {
    std::copy(yp.data() + static_cast<long>(c) * H * W, yp.data() + static_cast<long>(c + 1) * H * W, spatial.begin());
    fftw_execute(fwd_y);
    for (size_t i = 0; i < yf.size(); ++i) yf[i] *= std::conj(kf[i]) / (std::norm(kf[i]) + nsr);
    fftw_execute(inv);
    const double scale = 1.0 / (static_cast<double>(H) * W);
    for (int i = 0; i < y.height(); ++i)
      for (int j = 0; j < y.width(); ++j) out(c, i, j) = spatial[static_cast<size_t>(i + pad) * W + j + pad] * scale;
  }
  fftw_destroy_plan(fwd_k);
  fftw_destroy_plan(fwd_y);
  fftw_destroy_plan(inv);
  return clip01(out);
}

using KernelLookup = std::function<degrade::BlurKernel(std::string_view image_id)>;

class WienerExpert final : public FidelityExpert {
 public:
  WienerExpert(KernelLookup lookup, double nsr = 1e-2) : lookup_(std::move(lookup)), nsr_(nsr) {}
  explicit WienerExpert(degrade::BlurKernel fixed, double nsr = 1e-2)
      : lookup_([fixed](std::string_view) { return fixed; }), nsr_(nsr) {}

  ExpertKind kind() const override { return ExpertKind::kWiener; }
  Image restore(const Image& y, std::string_view image_id = {}) const override {
    return wiener_deconvolve(y, lookup_(image_id), nsr_);
  }

 private:
  KernelLookup lookup_;
  double nsr_;
};

/// String-keyed expert table used by the sampler and the command line.
class ExpertRegistry {
 public:
  void add(const std::string& id, std::shared_ptr<const FidelityExpert> e) { table_[id] = std::move(e); }
  bool has(const std::string& id) const { return table_.count(id) > 0; }
  const FidelityExpert& get(const std::string& id) const {
    auto it = table_.find(id);
    if (it == table_.end()) throw NotFound("unknown fidelity expert: " + id);
    return *it->second;
  }
  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : table_) out.push_back(k);
    return out;
  }

 private:
  std::map<std::string, std::shared_ptr<const FidelityExpert>> table_;
};

inline Image expert_restore(const ExpertRegistry& reg, const std::string& id, const Image& y, std::string_view image_id = {}) {
  return reg.get(id).restore(y, image_id);
}

}  // namespace deblurflow::expert

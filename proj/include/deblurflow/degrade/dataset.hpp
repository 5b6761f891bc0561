#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "deblurflow/core/config.hpp"
#include "deblurflow/core/png_io.hpp"
#include "deblurflow/core/rng.hpp"
#include "deblurflow/degrade/blur.hpp"
#include "deblurflow/degrade/kernel.hpp"
#include "deblurflow/degrade/pair.hpp"

namespace deblurflow::degrade {

namespace fs = std::filesystem;

struct SourceImage {
  std::string id;
  Image image;
};

struct ManifestEntry {
  std::string id;
  std::string split;
  KernelKind kernel_kind = KernelKind::kLinearMotion;
  std::uint64_t kernel_seed = 0;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  KernelSpec kernels;
  Boundary boundary = Boundary::kReflect;

  long count(const std::string& split) const {
    return std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.split == split; });
  }
  const ManifestEntry& find(const std::string& id) const {
    for (const auto& e : entries)
      if (e.id == id) return e;
    throw NotFound("manifest has no entry " + id);
  }
};

inline const std::vector<std::string>& split_names() {
  static const std::vector<std::string> names{"train", "val", "test"};
  return names;
}

/// Per-split counts for `n` items. Train and val are rounded, test takes the
/// remainder so counts always sum to n.
inline std::vector<long> split_counts(long n, const std::vector<double>& ratios) {
  if (ratios.size() < 2 || ratios.size() > 3) throw InvalidArgument("split ratios need 2 or 3 entries");
  double sum = 0;
  for (double r : ratios) {
    if (r < 0) throw InvalidArgument("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split ratios must sum to 1, got " + format_double(sum));
  std::vector<long> counts(3, 0);
  counts[0] = std::lround(ratios[0] * n);
  counts[1] = ratios.size() == 3 ? std::min(n - counts[0], std::lround(ratios[1] * n)) : n - counts[0];
  counts[2] = n - counts[0] - counts[1];
  return counts;
}

/// Assigns splits and kernel seeds. Pure in (ids, spec, ratios, seed);
/// per-image kernel seeds depend only on (seed, id).
inline Manifest build_manifest(std::vector<std::string> ids, const KernelSpec& spec, const std::vector<double>& ratios,
                               std::uint64_t seed) {
  if (ids.empty()) throw NotFound("no source images");
  if (spec.kinds.empty()) throw InvalidArgument("kernel spec lists no kinds");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw InvalidArgument("duplicate source ids");
  const auto counts = split_counts(static_cast<long>(ids.size()), ratios);
  Rng rng(derive_seed(seed, "split-shuffle"));
  std::shuffle(ids.begin(), ids.end(), rng.engine());

  Manifest m;
  m.kernels = spec;
  long pos = 0;
  for (int s = 0; s < 3; ++s) {
    std::vector<ManifestEntry> part;
    for (long i = 0; i < counts[s]; ++i, ++pos) {
      ManifestEntry e;
      e.id = ids[pos];
      e.split = split_names()[s];
      const auto kseed = derive_seed(seed, "kernel:" + e.id);
      e.kernel_kind = spec.kinds[kseed % spec.kinds.size()];
      e.kernel_seed = kseed;
      part.push_back(e);
    }
    std::sort(part.begin(), part.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    m.entries.insert(m.entries.end(), part.begin(), part.end());
  }
  return m;
}

inline std::string manifest_csv(const Manifest& m) {
  std::ostringstream out;
  out << "id,split,kernel_kind,kernel_seed\n";
  for (const auto& e : m.entries) out << e.id << "," << e.split << "," << to_string(e.kernel_kind) << "," << e.kernel_seed << "\n";
  return out.str();
}

inline Config kernel_spec_config(const KernelSpec& spec, Boundary b) {
  Config c;
  std::string kinds;
  for (size_t i = 0; i < spec.kinds.size(); ++i) kinds += (i ? "," : "") + to_string(spec.kinds[i]);
  c.set("kernels.kinds", kinds);
  c.set("kernels.size", std::to_string(spec.size));
  c.set("kernels.min_extent", format_double(spec.min_extent));
  c.set("kernels.max_extent", format_double(spec.max_extent));
  c.set("kernels.boundary", b == Boundary::kReflect ? "reflect" : "replicate");
  return c;
}

inline KernelSpec kernel_spec_from_config(const Config& c) {
  KernelSpec spec;
  if (c.has("kernels.kinds")) {
    spec.kinds.clear();
    for (const auto& k : Config::split(c.get_string("kernels.kinds"), ',')) spec.kinds.push_back(parse_kernel_kind(k));
  }
  spec.size = static_cast<int>(c.get_int("kernels.size", spec.size));
  spec.min_extent = c.get_double("kernels.min_extent", spec.min_extent);
  spec.max_extent = c.get_double("kernels.max_extent", spec.max_extent);
  return spec;
}

/// Blurs every source according to the manifest and writes
/// `<root>/{train,val,test}/{sharp,blur}/<id>.png`, `manifest.csv` and
/// `dataset.cfg` (the kernel family, so kernels can be regenerated).
inline void write_dataset(const fs::path& root, const std::vector<SourceImage>& sources, const Manifest& m) {
  for (const auto& s : split_names())
    for (const char* kind : {"sharp", "blur"}) fs::create_directories(root / s / kind);
  for (const auto& e : m.entries) {
    auto it = std::find_if(sources.begin(), sources.end(), [&](const SourceImage& s) { return s.id == e.id; });
    if (it == sources.end()) throw NotFound("source image missing for id " + e.id);
    const Image sharp = quantize8(it->image);
    const Image blur = apply_blur(sharp, kernel_from_seed(m.kernels, e.kernel_kind, e.kernel_seed), m.boundary);
    write_png((root / e.split / "sharp" / (e.id + ".png")).string(), sharp);
    write_png((root / e.split / "blur" / (e.id + ".png")).string(), blur);
  }
  std::ofstream(root / "manifest.csv") << manifest_csv(m);
  kernel_spec_config(m.kernels, m.boundary).save((root / "dataset.cfg").string());
}

inline std::vector<SourceImage> load_sources(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw NotFound("source directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& ent : fs::directory_iterator(dir))
    if (ent.is_regular_file() && ent.path().extension() == ".png") files.push_back(ent.path());
  if (files.empty()) throw NotFound("no PNG images in " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<SourceImage> out;
  for (const auto& f : files) out.push_back({f.stem().string(), read_png(f.string())});
  return out;
}

inline Manifest build_dataset(const std::vector<SourceImage>& sources, const KernelSpec& spec,
                              const std::vector<double>& ratios, std::uint64_t seed) {
  std::vector<std::string> ids;
  for (const auto& s : sources) ids.push_back(s.id);
  return build_manifest(ids, spec, ratios, seed);
}

inline Manifest read_manifest(const fs::path& root) {
  std::ifstream f(root / "manifest.csv");
  if (!f) throw NotFound("dataset manifest not found under " + root.string());
  Manifest m;
  if (fs::exists(root / "dataset.cfg")) {
    const Config c = Config::load((root / "dataset.cfg").string());
    m.kernels = kernel_spec_from_config(c);
    m.boundary = parse_boundary(c.get_string("kernels.boundary", "reflect"));
  }
  std::string line;
  std::getline(f, line);
  if (Config::trim(line) != "id,split,kernel_kind,kernel_seed") throw InvalidArgument("unexpected manifest header: " + line);
  while (std::getline(f, line)) {
    const auto parts = Config::split(line, ',');
    if (parts.empty()) continue;
    if (parts.size() != 4) throw InvalidArgument("bad manifest row: " + line);
    m.entries.push_back({parts[0], parts[1], parse_kernel_kind(parts[2]), std::stoull(parts[3])});
  }
  return m;
}

inline std::vector<ImagePair> load_split(const fs::path& root, const std::string& split) {
  const Manifest m = read_manifest(root);
  std::vector<ImagePair> pairs;
  for (const auto& e : m.entries) {
    if (e.split != split) continue;
    pairs.push_back(make_pair(e.id, read_png((root / split / "sharp" / (e.id + ".png")).string()),
                              read_png((root / split / "blur" / (e.id + ".png")).string())));
  }
  return pairs;
}

/// Procedural sharp test image: a smooth background with overlapping
/// rectangles, discs, stripes and thin lines, giving plenty of edges.
inline Image synthesize_source(int size, int channels, std::uint64_t seed) {
  Rng rng(seed);
  Image img(channels, size, size);
  std::vector<double> base(channels), grad_x(channels), grad_y(channels);
  for (int c = 0; c < channels; ++c) {
    base[c] = rng.uniform(0.2, 0.8);
    grad_x[c] = rng.uniform(-0.3, 0.3);
    grad_y[c] = rng.uniform(-0.3, 0.3);
  }
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        img(c, y, x) = std::clamp(base[c] + grad_x[c] * (x / double(size) - 0.5) + grad_y[c] * (y / double(size) - 0.5), 0.0, 1.0);

  auto color = [&] {
    std::vector<double> col(channels);
    for (auto& v : col) v = rng.uniform();
    return col;
  };
  const int shapes = rng.uniform_int(6, 12);
  for (int s = 0; s < shapes; ++s) {
    const int type = rng.uniform_int(0, 3);
    const auto col = color();
    const double cx = rng.uniform(0, size), cy = rng.uniform(0, size);
    const double a = rng.uniform(size * 0.06, size * 0.3), b = rng.uniform(size * 0.06, size * 0.3);
    const double freq = rng.uniform(0.3, 1.2), phase = rng.uniform(0, 6.28), angle = rng.uniform(0, 3.14159);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double dx = x - cx, dy = y - cy;
        bool inside = false;
        double shade = 1.0;
        switch (type) {
          case 0: inside = std::abs(dx) < a && std::abs(dy) < b; break;
          case 1: inside = dx * dx + dy * dy < a * a; break;
          case 2:
            inside = std::abs(dx) < a && std::abs(dy) < a;
            shade = 0.5 + 0.5 * std::sin(freq * (dx * std::cos(angle) + dy * std::sin(angle)) + phase);
            break;
          case 3: inside = std::abs(dx * std::sin(angle) - dy * std::cos(angle)) < 0.8 && dx * dx + dy * dy < 4 * a * a; break;
        }
        if (!inside) continue;
        for (int c = 0; c < channels; ++c) img(c, y, x) = std::clamp(shade * col[c] + (1 - shade) * img(c, y, x), 0.0, 1.0);
      }
  }
  return img;
}

inline std::vector<SourceImage> synthesize_sources(int count, int size, int channels, std::uint64_t seed) {
  std::vector<SourceImage> out;
  const int digits = static_cast<int>(std::to_string(std::max(count - 1, 0)).size());
  for (int i = 0; i < count; ++i) {
    std::string id = std::to_string(i);
    id = "img" + std::string(digits - id.size(), '0') + id;
    out.push_back({id, synthesize_source(size, channels, derive_seed(seed, "source:" + id))});
  }
  return out;
}

}  // namespace deblurflow::degrade

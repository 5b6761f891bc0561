#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "deblurflow/core/config.hpp"
#include "deblurflow/core/png_io.hpp"

namespace deblurflow::eval {

/// Scores from an out-of-process metric, keyed by image id then metric name.
struct ExternalScores {
  std::vector<std::string> metrics;
  std::map<std::string, std::map<std::string, double>> per_image;

  double mean(const std::string& metric) const {
    if (per_image.empty()) throw InvalidArgument("external scorer returned no rows");
    double acc = 0;
    for (const auto& [id, m] : per_image) {
      auto it = m.find(metric);
      if (it == m.end()) throw InvalidArgument("external scorer gave no " + metric + " for " + id);
      acc += it->second;
    }
    return acc / static_cast<double>(per_image.size());
  }
};

/// Parses the scorer's stdout: a header `image,<metric>,...` then one row per image.
inline ExternalScores parse_external_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("external scorer printed nothing");
  auto header = Config::split(line, ',');
  if (header.size() < 2 || header[0] != "image") throw InvalidArgument("external scorer header must start with image: " + line);
  ExternalScores s;
  s.metrics.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    const auto f = Config::split(line, ',');
    if (f.empty()) continue;
    if (f.size() != header.size()) throw InvalidArgument("external scorer row has " + std::to_string(f.size()) + " fields: " + line);
    auto& row = s.per_image[f[0]];
    for (size_t i = 1; i < f.size(); ++i) {
      try {
        row[header[i]] = std::stod(f[i]);
      } catch (const std::exception&) {
        throw InvalidArgument("external scorer value is not a number: " + f[i]);
      }
    }
  }
  return s;
}

/// Runs `<command> <outputs_dir> <references_dir>`; see docs/metrics-plugin.md.
class ExternalScorer {
 public:
  explicit ExternalScorer(std::string command) : command_(std::move(command)) {}

  ExternalScores score_dirs(const std::filesystem::path& outputs, const std::filesystem::path& references) const {
    const std::string cmd = command_ + " '" + outputs.string() + "' '" + references.string() + "'";
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
    if (!pipe) throw DependencyError("cannot start external scorer: " + command_);
    std::string out;
    char buf[4096];
    while (size_t n = std::fread(buf, 1, sizeof buf, pipe.get())) out.append(buf, n);
    const int status = pclose(pipe.release());
    if (status != 0) throw DependencyError("external scorer failed (status " + std::to_string(status) + "): " + command_);
    return parse_external_csv(out);
  }

  /// Writes both image sets as `<id>.png` into `scratch/{outputs,references}` first.
  ExternalScores score(const std::vector<std::string>& ids, const std::vector<Image>& outputs, const std::vector<Image>& references,
                       const std::filesystem::path& scratch) const {
    require(ids.size() == outputs.size() && ids.size() == references.size(), "external scorer inputs differ in length");
    const auto od = scratch / "outputs", rd = scratch / "references";
    std::filesystem::create_directories(od);
    std::filesystem::create_directories(rd);
    for (size_t i = 0; i < ids.size(); ++i) {
      write_png((od / (ids[i] + ".png")).string(), outputs[i]);
      write_png((rd / (ids[i] + ".png")).string(), references[i]);
    }
    return score_dirs(od, rd);
  }

 private:
  std::string command_;
};

}  // namespace deblurflow::eval

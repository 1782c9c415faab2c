#include <fstream>
#include <numeric>

#include <spdlog/fmt/fmt.h>

#include "nids/error.hpp"
#include "nids/pipeline.hpp"
#include "nids/random.hpp"

namespace nids::pipeline {

std::string generate_synthetic(const SynthSpec& spec) {
  if (spec.class_counts.size() < 2) fail(ErrorKind::Argument, "synthetic data needs at least 2 classes");
  if (spec.informative < 1) fail(ErrorKind::Argument, "synthetic data needs at least 1 informative feature");
  for (auto c : spec.class_counts) {
    if (c < 2) fail(ErrorKind::Argument, "every synthetic class needs at least 2 rows");
  }
  Rng rng(spec.seed);
  const std::size_t d = spec.informative + spec.noise;
  std::vector<int> labels;
  for (std::size_t c = 0; c < spec.class_counts.size(); ++c) labels.insert(labels.end(), spec.class_counts[c], static_cast<int>(c));
  shuffle(labels, rng);

  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += (j < spec.informative ? "inf" : "noise") + std::to_string(j) + ",";
  out += "label\n";
  for (int c : labels) {
    for (std::size_t j = 0; j < d; ++j) {
      const double centre = j < spec.informative ? spec.separation * c : 0.0;
      out += fmt::format("{:.17g},", centre + standard_normal(rng));
    }
    out += "class" + std::to_string(c) + "\n";
  }
  return out;
}

void write_synthetic(const SynthSpec& spec, const std::filesystem::path& path) {
  const auto text = generate_synthetic(spec);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Stage, "cannot write " + path.string());
  out << text;
}

}  // namespace nids::pipeline

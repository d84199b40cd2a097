#include "adapt/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "adapt/binary_io.hpp"
#include "adapt/rng.hpp"

namespace adapt {

namespace {

struct DatasetShape {
  std::size_t channels;
  std::size_t min_len;
  std::size_t max_len;
};

constexpr DatasetShape kShapes[] = {{1, 50, 150}, {2, 100, 300}, {3, 200, 500}, {4, 50, 500}};

RawSample make_sample(Rng& rng, const DatasetShape& shape, std::uint32_t label, const std::string& id,
                      double noise_sigma) {
  std::uniform_int_distribution<std::size_t> len_dist(shape.min_len, shape.max_len);
  std::uniform_real_distribution<double> cycles(2.0, 5.0);  // >= 10 samples per cycle at the shortest length
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.5, 1.5);
  std::normal_distribution<double> noise(0.0, noise_sigma);
  const auto len = len_dist(rng);
  RawSample s;
  s.values = Matrix<double>(len, shape.channels);
  s.label = label;
  s.dataset_id = id;
  // One period per sample, shared by its channels; phase and amplitude vary per channel.
  const double f = cycles(rng);
  for (std::size_t c = 0; c < shape.channels; ++c) {
    const double ph = phase(rng), a = amp(rng);
    for (std::size_t t = 0; t < len; ++t) {
      const double x = static_cast<double>(t) / static_cast<double>(len);
      double v = 0.0;
      if (label == 0) {
        v = a * std::sin(2.0 * std::numbers::pi * f * x + ph);
      } else {
        const double u = f * x + ph / (2.0 * std::numbers::pi);
        v = a * 2.0 * (u - std::floor(u + 0.5));
      }
      s.values(t, c) = v + noise(rng);
    }
  }
  return s;
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec) {
  SyntheticCorpus corpus;
  for (std::size_t d = 0; d < spec.datasets; ++d) {
    const auto& shape = kShapes[d % std::size(kShapes)];
    const std::string id = "synth" + std::to_string(d);
    Rng rng(mix_seed(spec.seed, d));
    corpus.dataset_ids.push_back(id);
    auto fill = [&](std::size_t n) {
      std::vector<RawSample> out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(make_sample(rng, shape, static_cast<std::uint32_t>(i % 2), id, spec.noise_sigma));
      return out;
    };
    corpus.train.push_back(fill(spec.train_per_dataset));
    corpus.test.push_back(fill(spec.test_per_dataset));
  }
  return corpus;
}

std::string write_synthetic_corpus(const std::string& dir, const SyntheticSpec& spec) {
  std::filesystem::create_directories(dir);
  const auto corpus = make_synthetic_corpus(spec);
  DatasetManifest m;
  for (std::size_t d = 0; d < corpus.dataset_ids.size(); ++d) {
    const auto& id = corpus.dataset_ids[d];
    write_samples((std::filesystem::path(dir) / (id + "_train.adts")).string(), corpus.train[d]);
    write_samples((std::filesystem::path(dir) / (id + "_test.adts")).string(), corpus.test[d]);
    m.entries.push_back({id, Split::kTrain, id + "_train.adts", 2});
    m.entries.push_back({id, Split::kTest, id + "_test.adts", 2});
  }
  const auto path = (std::filesystem::path(dir) / "manifest.json").string();
  io::write_file(path, manifest_to_json(m));
  return path;
}

}  // namespace adapt

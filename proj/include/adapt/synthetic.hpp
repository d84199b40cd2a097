#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adapt/ingest.hpp"

namespace adapt {

// Mixed-shape two-class corpus: class 0 is a sine, class 1 a sawtooth, with a random period shared
// by the sample's channels, random per-channel phase and amplitude, and additive noise. Dataset d has its own channel count and
// length range (lengths 50-500, channels 1-4).
struct SyntheticSpec {
  std::size_t datasets = 4;
  std::size_t train_per_dataset = 50;
  std::size_t test_per_dataset = 25;
  double noise_sigma = 0.1;  // additive Gaussian noise on every value
  std::uint64_t seed = 2024;
};

struct SyntheticCorpus {
  std::vector<std::string> dataset_ids;
  std::vector<std::vector<RawSample>> train;
  std::vector<std::vector<RawSample>> test;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticSpec& spec);

// Writes <id>_train.adts / <id>_test.adts and manifest.json into dir; returns the manifest path.
std::string write_synthetic_corpus(const std::string& dir, const SyntheticSpec& spec);

}  // namespace adapt

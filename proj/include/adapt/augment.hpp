#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "adapt/align.hpp"
#include "adapt/rng.hpp"

namespace adapt {

struct NoiseConfig {
  double mu = 0.0;
  double sigma = 0.1;
  bool enabled_pretrain = true;
  bool enabled_finetune = false;

  void validate() const;
};

struct SpanMaskConfig {
  double p = 0.2;           // geometric skew
  std::size_t l_max = 10;   // longest span
  double p_m = 0.8;         // span zeroed
  double p_r = 0.2;         // span replaced by N(0, 1) draws
  double mask_ratio = 0.15; // stop once |Q| >= mask_ratio * L

  void validate() const;
};

enum class SpanAction : std::uint8_t { kZero, kRandom };

struct MaskSpan {
  std::size_t start = 0;
  std::size_t length = 0;
  SpanAction action = SpanAction::kZero;
  friend bool operator==(const MaskSpan&, const MaskSpan&) = default;
};

struct MaskPlan {
  std::vector<MaskSpan> spans;
  std::vector<std::size_t> masked;  // Q, sorted and unique

  friend bool operator==(const MaskPlan&, const MaskPlan&) = default;
};

// Independent engines for span layout, additive noise and random replacement values, so that
// toggling one augmentation leaves the others' draws untouched.
struct AugmentRng {
  Rng mask;
  Rng noise;
  Rng replace;

  explicit AugmentRng(std::uint64_t seed)
      : mask(stream_seed(seed, Stream::kMask)),
        noise(stream_seed(seed, Stream::kNoise)),
        replace(stream_seed(seed, Stream::kReplace)) {}
};

// P(l = k) = p (1-p)^(k-1) / (1 - (1-p)^l_max), k = 1..l_max.
std::vector<double> span_length_pmf(const SpanMaskConfig& cfg);

std::size_t sample_span_length(Rng& rng, const SpanMaskConfig& cfg);

MaskPlan build_mask_plan(Rng& rng, const SpanMaskConfig& cfg, std::size_t seq_len);

Matrix<double> add_noise(const Matrix<double>& repr, Rng& rng, const NoiseConfig& cfg, bool enabled = true);

// Whole rows (time positions) are masked; zero spans write 0, random spans write N(0, 1).
Matrix<double> apply_mask(const Matrix<double>& repr, const MaskPlan& plan, Rng& rng);

struct MaskedPair {
  Matrix<double> input_time;
  Matrix<double> input_freq;
  Matrix<double> target_time;
  Matrix<double> target_freq;
  MaskPlan q_time;
  MaskPlan q_freq;
  std::optional<std::uint32_t> label;
  std::string dataset_id;
};

struct AugmentOptions {
  NoiseConfig noise;
  SpanMaskConfig mask;
  bool noise_on = true;         // resolved from noise.enabled_pretrain / enabled_finetune by the caller
  bool noised_targets = false;  // targets = s_n instead of A(s)
  bool mask_on = true;          // false for fine-tuning: plans stay empty
};

// Noise first, then independent span masks on the time and frequency streams.
MaskedPair augment_sample(const AlignedSample& sample, AugmentRng& rng, const AugmentOptions& opts);

}  // namespace adapt

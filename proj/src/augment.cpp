#include "adapt/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace adapt {

void NoiseConfig::validate() const {
  if (!(sigma >= 0.0) || !std::isfinite(sigma) || !std::isfinite(mu)) {
    throw ValidationError("noise sigma must be finite and >= 0");
  }
}

void SpanMaskConfig::validate() const {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("span p must lie in (0, 1), got " + std::to_string(p));
  if (l_max < 1) throw ValidationError("l_max must be >= 1");
  if (p_m < 0.0 || p_r < 0.0 || std::abs(p_m + p_r - 1.0) > 1e-9) {
    throw ValidationError("p_m + p_r must equal 1");
  }
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw ValidationError("mask_ratio must lie in (0, 1), got " + std::to_string(mask_ratio));
  }
}

std::vector<double> span_length_pmf(const SpanMaskConfig& cfg) {
  std::vector<double> pmf(cfg.l_max);
  const double norm = 1.0 - std::pow(1.0 - cfg.p, static_cast<double>(cfg.l_max));
  for (std::size_t k = 1; k <= cfg.l_max; ++k) {
    pmf[k - 1] = cfg.p * std::pow(1.0 - cfg.p, static_cast<double>(k - 1)) / norm;
  }
  return pmf;
}

std::size_t sample_span_length(Rng& rng, const SpanMaskConfig& cfg) {
  if (cfg.l_max <= 1) return 1;
  // Inverse CDF over the renormalized support [1, l_max].
  const auto pmf = span_length_pmf(cfg);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cdf = 0.0;
  for (std::size_t k = 0; k + 1 < pmf.size(); ++k) {
    cdf += pmf[k];
    if (u < cdf) return k + 1;
  }
  return cfg.l_max;
}

MaskPlan build_mask_plan(Rng& rng, const SpanMaskConfig& cfg, std::size_t seq_len) {
  if (seq_len == 0) throw ContractViolation("build_mask_plan: seq_len must be >= 1");
  cfg.validate();
  const double target = cfg.mask_ratio * static_cast<double>(seq_len);
  std::vector<bool> hit(seq_len, false);
  std::size_t count = 0;
  MaskPlan plan;
  std::uniform_int_distribution<std::size_t> start_dist(0, seq_len - 1);
  std::bernoulli_distribution zero_dist(cfg.p_m);
  do {
    MaskSpan span;
    span.start = start_dist(rng);
    span.length = std::min(sample_span_length(rng, cfg), seq_len - span.start);
    span.action = zero_dist(rng) ? SpanAction::kZero : SpanAction::kRandom;
    for (std::size_t i = span.start; i < span.start + span.length; ++i) {
      if (!hit[i]) {
        hit[i] = true;
        ++count;
      }
    }
    plan.spans.push_back(span);
  } while (static_cast<double>(count) < target);
  plan.masked.reserve(count);
  for (std::size_t i = 0; i < seq_len; ++i)
    if (hit[i]) plan.masked.push_back(i);
  return plan;
}

Matrix<double> add_noise(const Matrix<double>& repr, Rng& rng, const NoiseConfig& cfg, bool enabled) {
  Matrix<double> out = repr;
  if (!enabled || cfg.sigma == 0.0) return out;
  std::normal_distribution<double> dist(cfg.mu, cfg.sigma);
  for (auto& v : out.flat()) v += dist(rng);
  return out;
}

Matrix<double> apply_mask(const Matrix<double>& repr, const MaskPlan& plan, Rng& rng) {
  Matrix<double> out = repr;
  std::normal_distribution<double> dist(0.0, 1.0);
  // Later spans overwrite earlier ones where they overlap.
  for (const auto& span : plan.spans) {
    if (span.start + span.length > repr.rows()) throw ContractViolation("apply_mask: span out of bounds");
    for (std::size_t r = span.start; r < span.start + span.length; ++r) {
      for (auto& v : out.row(r)) v = span.action == SpanAction::kZero ? 0.0 : dist(rng);
    }
  }
  return out;
}

MaskedPair augment_sample(const AlignedSample& sample, AugmentRng& rng, const AugmentOptions& opts) {
  if (!sample.time_repr.same_shape(sample.freq_repr)) {
    throw ContractViolation("augment_sample: time/freq shapes differ");
  }
  MaskedPair out;
  const auto noisy_time = add_noise(sample.time_repr, rng.noise, opts.noise, opts.noise_on);
  const auto noisy_freq = add_noise(sample.freq_repr, rng.noise, opts.noise, opts.noise_on);
  if (opts.mask_on) {
    out.q_time = build_mask_plan(rng.mask, opts.mask, sample.time_repr.rows());
    out.q_freq = build_mask_plan(rng.mask, opts.mask, sample.freq_repr.rows());
  }
  out.input_time = apply_mask(noisy_time, out.q_time, rng.replace);
  out.input_freq = apply_mask(noisy_freq, out.q_freq, rng.replace);
  out.target_time = opts.noised_targets ? noisy_time : sample.time_repr;
  out.target_freq = opts.noised_targets ? noisy_freq : sample.freq_repr;
  out.label = sample.label;
  out.dataset_id = sample.dataset_id;
  return out;
}

}  // namespace adapt

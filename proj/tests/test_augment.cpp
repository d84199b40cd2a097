#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"

#include "adapt/augment.hpp"

using namespace adapt;

namespace {

AlignedSample ramp_sample(std::size_t rows, std::size_t cols) {
  AlignedSample s;
  s.time_repr = Matrix<double>(rows, cols);
  s.freq_repr = Matrix<double>(rows, cols);
  for (std::size_t i = 0; i < s.time_repr.size(); ++i) {
    s.time_repr.data()[i] = 1.0 + static_cast<double>(i);
    s.freq_repr.data()[i] = -1.0 - static_cast<double>(i);
  }
  s.label = 1;
  s.dataset_id = "ramp";
  return s;
}

}  // namespace

TEST_CASE("span length pmf matches the closed form") {
  SpanMaskConfig cfg;
  const auto pmf = span_length_pmf(cfg);
  const auto ref = oracle::truncated_geometric(0.2, 10);
  REQUIRE(pmf.size() == 10);
  double total = 0;
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(std::abs(pmf[k] - ref[k]) < 1e-14);
    total += pmf[k];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pmf[0] == doctest::Approx(0.22408).epsilon(1e-4));
}

TEST_CASE("sampler empirical distribution over 1e6 draws") {
  SpanMaskConfig cfg;
  Rng rng(2024);
  std::vector<double> counts(cfg.l_max, 0.0);
  constexpr int kDraws = 1'000'000;
  for (int i = 0; i < kDraws; ++i) {
    const auto l = sample_span_length(rng, cfg);
    REQUIRE(l >= 1);
    REQUIRE(l <= cfg.l_max);
    counts[l - 1] += 1.0;
  }
  const auto ref = oracle::truncated_geometric(cfg.p, cfg.l_max);
  double tv = 0;
  for (std::size_t k = 0; k < cfg.l_max; ++k) tv += std::abs(counts[k] / kDraws - ref[k]);
  tv *= 0.5;
  CHECK(tv < 0.005);
  CHECK(std::abs(counts[0] / kDraws - 0.22408) < 0.003);
}

TEST_CASE("sampler edge parameters") {
  Rng rng(1);
  SpanMaskConfig near_one;
  near_one.p = 0.999;
  int ones = 0;
  for (int i = 0; i < 10000; ++i) ones += sample_span_length(rng, near_one) == 1;
  CHECK(ones > 9950);

  SpanMaskConfig single;
  single.l_max = 1;
  for (int i = 0; i < 1000; ++i) CHECK(sample_span_length(rng, single) == 1);
}

TEST_CASE("config validation") {
  SpanMaskConfig c;
  CHECK_NOTHROW(c.validate());
  c.mask_ratio = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.mask_ratio = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.p = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.p_m = 0.7;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.l_max = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  NoiseConfig n;
  n.sigma = -1;
  CHECK_THROWS_AS(n.validate(), ValidationError);
}

TEST_CASE("mask plan size bounds and action frequencies") {
  SpanMaskConfig cfg;
  Rng rng(77);
  std::size_t zero_spans = 0, spans = 0;
  for (int run = 0; run < 100000; ++run) {
    const auto plan = build_mask_plan(rng, cfg, 256);
    REQUIRE(plan.masked.size() >= 39);
    REQUIRE(plan.masked.size() <= 48);
    for (const auto& s : plan.spans) {
      REQUIRE(s.length >= 1);
      REQUIRE(s.start + s.length <= 256);
      zero_spans += s.action == SpanAction::kZero;
      ++spans;
    }
  }
  const double frac = static_cast<double>(zero_spans) / static_cast<double>(spans);
  CHECK(std::abs(frac - 0.8) < 0.01);
  CHECK(std::abs((1.0 - frac) - 0.2) < 0.01);
}

TEST_CASE("mask plan: tiny ratio gives exactly one span, masked is the union") {
  SpanMaskConfig cfg;
  cfg.mask_ratio = 1e-6;
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const auto plan = build_mask_plan(rng, cfg, 64);
    REQUIRE(plan.spans.size() == 1);
    REQUIRE(plan.masked.size() == plan.spans[0].length);
    CHECK(plan.masked.front() == plan.spans[0].start);
  }
}

TEST_CASE("mask plan on a length-1 sequence") {
  Rng rng(9);
  const auto plan = build_mask_plan(rng, SpanMaskConfig{}, 1);
  CHECK(plan.masked == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(build_mask_plan(rng, SpanMaskConfig{}, 0), ContractViolation);
}

TEST_CASE("apply_mask changes exactly the masked rows") {
  const auto s = ramp_sample(32, 3);
  SpanMaskConfig cfg;
  cfg.mask_ratio = 0.3;
  Rng rng(3), rep(4);
  const auto plan = build_mask_plan(rng, cfg, 32);
  const auto out = apply_mask(s.time_repr, plan, rep);
  std::vector<bool> in_q(32, false);
  for (auto q : plan.masked) in_q[q] = true;
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      if (in_q[r])
        CHECK(out(r, c) != s.time_repr(r, c));  // inputs are never 0 and N(0,1) never hits them exactly
      else
        CHECK(out(r, c) == s.time_repr(r, c));
    }

  MaskPlan empty;
  CHECK(apply_mask(s.time_repr, empty, rep) == s.time_repr);

  MaskPlan all;
  all.spans.push_back({0, 32, SpanAction::kZero});
  const auto zeroed = apply_mask(s.time_repr, all, rep);
  for (double v : zeroed.flat()) CHECK(v == 0.0);

  MaskPlan bad;
  bad.spans.push_back({30, 5, SpanAction::kZero});
  CHECK_THROWS_AS(apply_mask(s.time_repr, bad, rep), ContractViolation);
}

TEST_CASE("additive noise statistics") {
  Matrix<double> zeros(1000, 100, 0.0);
  Rng rng(12);
  NoiseConfig cfg;
  const auto noisy = add_noise(zeros, rng, cfg);
  double mean = 0, sq = 0;
  for (double v : noisy.flat()) mean += v;
  mean /= static_cast<double>(noisy.size());
  for (double v : noisy.flat()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(noisy.size()));
  CHECK(std::abs(mean) < 0.002);
  CHECK(std::abs(sd - 0.1) < 0.002);

  cfg.sigma = 0.0;
  CHECK(add_noise(noisy, rng, cfg) == noisy);
  cfg.sigma = 0.5;
  CHECK(add_noise(noisy, rng, cfg, false) == noisy);
}

TEST_CASE("augment_sample") {
  const auto s = ramp_sample(64, 4);
  AugmentOptions opts;

  SUBCASE("deterministic under a fixed seed") {
    AugmentRng a(42), b(42);
    const auto x = augment_sample(s, a, opts);
    const auto y = augment_sample(s, b, opts);
    CHECK(x.input_time == y.input_time);
    CHECK(x.input_freq == y.input_freq);
    CHECK(x.q_time == y.q_time);
    CHECK(x.q_freq == y.q_freq);
  }
  SUBCASE("clean targets by default, noised on request") {
    AugmentRng a(1);
    const auto x = augment_sample(s, a, opts);
    CHECK(x.target_time == s.time_repr);
    CHECK(x.target_freq == s.freq_repr);
    CHECK(x.label == s.label);
    CHECK(x.dataset_id == "ramp");
    opts.noised_targets = true;
    AugmentRng b(1);
    const auto y = augment_sample(s, b, opts);
    CHECK_FALSE(y.target_time == s.time_repr);
    std::vector<bool> in_q(64, false);
    for (auto q : y.q_time.masked) in_q[q] = true;
    for (std::size_t r = 0; r < 64; ++r)
      if (!in_q[r])
        for (std::size_t c = 0; c < 4; ++c) CHECK(y.input_time(r, c) == y.target_time(r, c));
  }
  SUBCASE("fine-tuning mode leaves inputs untouched") {
    opts.mask_on = false;
    opts.noise_on = false;
    AugmentRng a(1);
    const auto x = augment_sample(s, a, opts);
    CHECK(x.q_time.masked.empty());
    CHECK(x.input_time == s.time_repr);
    CHECK(x.input_freq == s.freq_repr);
  }
  SUBCASE("noise toggle does not move the span layout") {
    AugmentRng a(8), b(8);
    const auto x = augment_sample(s, a, opts);
    opts.noise_on = false;
    const auto y = augment_sample(s, b, opts);
    CHECK(x.q_time == y.q_time);
    CHECK(x.q_freq == y.q_freq);
  }
  SUBCASE("time and frequency plans are independent") {
    std::size_t equal = 0;
    double overlap = 0, expected = 0;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      AugmentRng r(seed);
      const auto x = augment_sample(s, r, opts);
      equal += x.q_time.masked == x.q_freq.masked;
      std::vector<bool> in_t(64, false);
      for (auto q : x.q_time.masked) in_t[q] = true;
      std::size_t both = 0;
      for (auto q : x.q_freq.masked) both += in_t[q];
      overlap += static_cast<double>(both);
      expected += static_cast<double>(x.q_time.masked.size() * x.q_freq.masked.size()) / 64.0;
    }
    CHECK(equal < 100);
    // Overlap under independence is |Qt||Qf|/L on average; near-boundary effects keep it close.
    CHECK(std::abs(overlap / expected - 1.0) < 0.1);
  }
  SUBCASE("shape mismatch is rejected") {
    auto bad = s;
    bad.freq_repr = Matrix<double>(10, 4);
    AugmentRng a(1);
    CHECK_THROWS_AS(augment_sample(bad, a, opts), ContractViolation);
  }
}

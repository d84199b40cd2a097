#include "adapt/kernels.hpp"

#include <exception>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace adapt::kernels {

namespace serial {

std::vector<AlignedSample> align_all(std::span<const RawSample> samples, const AlignConfig& cfg) {
  std::vector<AlignedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(align_sample(s, cfg));
  return out;
}

std::vector<MaskedPair> augment_all(std::span<const AlignedSample* const> items, std::span<const std::uint64_t> seeds,
                                    const AugmentOptions& opts) {
  if (items.size() != seeds.size()) throw ContractViolation("augment_all: one seed per item required");
  std::vector<MaskedPair> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    AugmentRng rng(seeds[i]);
    out.push_back(augment_sample(*items[i], rng, opts));
  }
  return out;
}

}  // namespace serial

namespace parallel {

namespace {

// Runs body(i) for i in [0, n) and rethrows the first exception outside the parallel region.
template <typename F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(adapt_kernel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<AlignedSample> align_all(std::span<const RawSample> samples, const AlignConfig& cfg) {
  std::vector<AlignedSample> out(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { out[i] = align_sample(samples[i], cfg); });
  return out;
}

std::vector<MaskedPair> augment_all(std::span<const AlignedSample* const> items, std::span<const std::uint64_t> seeds,
                                    const AugmentOptions& opts) {
  if (items.size() != seeds.size()) throw ContractViolation("augment_all: one seed per item required");
  std::vector<MaskedPair> out(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    AugmentRng rng(seeds[i]);
    out[i] = augment_sample(*items[i], rng, opts);
  });
  return out;
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace adapt::kernels

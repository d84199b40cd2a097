#include <benchmark/benchmark.h>

#include <vector>

#include "adapt/kernels.hpp"
#include "adapt/rng.hpp"
#include "adapt/synthetic.hpp"

namespace {

using namespace adapt;

Matrix<float> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  Matrix<float> m(rows, cols);
  for (auto& v : m.flat()) v = dist(rng);
  return m;
}

// Shapes of the desk model's largest products: (B*L) x d times d x ffn.
template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(m, 32, 1), b = random_matrix(32, 128, 2);
  Matrix<float> c(m, 128);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::gemm_nn(a, b, c);
    } else {
      kernels::serial::gemm_nn(a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * 32 * 128));
}

const std::vector<RawSample>& corpus() {
  static const auto samples = [] {
    SyntheticSpec spec;
    spec.train_per_dataset = 64;
    spec.test_per_dataset = 0;
    auto c = make_synthetic_corpus(spec);
    std::vector<RawSample> all;
    for (auto& d : c.train) all.insert(all.end(), d.begin(), d.end());
    return all;
  }();
  return samples;
}

AlignConfig desk_align() {
  AlignConfig cfg;
  cfg.seq_len = 64;
  cfg.channels = 8;
  return cfg;
}

template <bool Parallel>
void BM_align_all(benchmark::State& state) {
  const auto& samples = corpus();
  const auto cfg = desk_align();
  for (auto _ : state) {
    auto out = Parallel ? kernels::parallel::align_all(samples, cfg) : kernels::serial::align_all(samples, cfg);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * samples.size()));
}

template <bool Parallel>
void BM_augment_all(benchmark::State& state) {
  const auto aligned = kernels::serial::align_all(corpus(), desk_align());
  std::vector<const AlignedSample*> items;
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    items.push_back(&aligned[i]);
    seeds.push_back(mix_seed(7, i));
  }
  const AugmentOptions opts;
  for (auto _ : state) {
    auto out = Parallel ? kernels::parallel::augment_all(items, seeds, opts)
                        : kernels::serial::augment_all(items, seeds, opts);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * items.size()));
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/serial")->Arg(512)->Arg(2048);
BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(512)->Arg(2048);
BENCHMARK(BM_align_all<false>)->Name("align_all/serial");
BENCHMARK(BM_align_all<true>)->Name("align_all/parallel");
BENCHMARK(BM_augment_all<false>)->Name("augment_all/serial");
BENCHMARK(BM_augment_all<true>)->Name("augment_all/parallel");

BENCHMARK_MAIN();

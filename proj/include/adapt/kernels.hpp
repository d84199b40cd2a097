#pragma once

// Data-parallel kernels. Each kernel has a serial reference in kernels::serial and an OpenMP
// version in kernels::parallel. Both use the same per-element accumulation order, so results are
// bitwise identical regardless of thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "adapt/align.hpp"
#include "adapt/augment.hpp"
#include "adapt/tensor.hpp"

namespace adapt::kernels {

// Below this many multiply-adds the OpenMP region costs more than it saves.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

namespace serial {

// C (m x n) [+]= A (m x k) * B (k x n)
template <typename T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c.data() + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{0});
    const T* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (m x n) [+]= A^T * B with A (k x m), B (k x n)
template <typename T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c.data() + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{0});
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a.data()[p * m + i];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C (m x n) [+]= A (m x k) * B^T with B (n x k)
template <typename T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a.data() + i * k;
    T* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b.data() + j * k;
      T sum{0};
      for (std::size_t p = 0; p < k; ++p) sum += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + sum : sum;
    }
  }
}

std::vector<AlignedSample> align_all(std::span<const RawSample> samples, const AlignConfig& cfg);

// Item i is augmented with AugmentRng(seeds[i]).
std::vector<MaskedPair> augment_all(std::span<const AlignedSample* const> items, std::span<const std::uint64_t> seeds,
                                    const AugmentOptions& opts);

}  // namespace serial

namespace parallel {

template <typename T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelThreshold)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* ci = c.data() + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{0});
    const T* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false) {
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelThreshold)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    T* ci = c.data() + i * n;
    if (!accumulate) std::fill(ci, ci + n, T{0});
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a.data()[p * m + i];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

template <typename T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c, bool accumulate = false) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelThreshold)
  for (std::ptrdiff_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const T* ai = a.data() + i * k;
    T* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b.data() + j * k;
      T sum{0};
      for (std::size_t p = 0; p < k; ++p) sum += ai[p] * bj[p];
      ci[j] = accumulate ? ci[j] + sum : sum;
    }
  }
}

std::vector<AlignedSample> align_all(std::span<const RawSample> samples, const AlignConfig& cfg);

std::vector<MaskedPair> augment_all(std::span<const AlignedSample* const> items, std::span<const std::uint64_t> seeds,
                                    const AugmentOptions& opts);

}  // namespace parallel

int max_threads();
void set_threads(int n);

}  // namespace adapt::kernels

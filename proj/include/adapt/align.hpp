#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adapt/ingest.hpp"
#include "adapt/tensor.hpp"

namespace adapt {

// Half-open input range [start, end) feeding output element i.
struct KernelBounds {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  friend bool operator==(const KernelBounds&, const KernelBounds&) = default;
};

// start = floor(i*N/M), end = ceil((i+1)*N/M), in exact integer arithmetic.
constexpr KernelBounds kernel_bounds(std::size_t i, std::size_t out_size, std::size_t in_size) {
  return {(i * in_size) / out_size, ((i + 1) * in_size + out_size - 1) / out_size};
}

std::vector<KernelBounds> kernel_table(std::size_t in_size, std::size_t out_size);

std::vector<double> adaptive_pool_1d(std::span<const double> values, std::size_t out_size);
Matrix<double> adaptive_pool_2d(const Matrix<double>& values, std::size_t out_rows, std::size_t out_cols);

enum class AlignMethod {
  kAdaptivePool,
  kTruncate,  // baseline: crop or zero-pad both axes
};

struct AlignConfig {
  std::size_t seq_len = 256;   // L_out
  std::size_t channels = 32;   // C_out
  AlignMethod method = AlignMethod::kAdaptivePool;
  bool spectrum_zscore = false;
};

struct AlignedSample {
  Matrix<double> time_repr;
  Matrix<double> freq_repr;
  std::optional<std::uint32_t> label;
  std::string dataset_id;
};

AlignedSample align_sample(const RawSample& sample, const AlignConfig& cfg);

// Crop/zero-pad to (rows, cols), top-left anchored.
Matrix<double> truncate_or_pad(const Matrix<double>& values, std::size_t rows, std::size_t cols);

// "ADAS" file: magic, version u32, count u64, then per sample
// (length u32 = L_out, channels u32 = C_out, label i32, id_len u32, id bytes,
//  L_out*C_out float32 time values, L_out*C_out float32 frequency values).
std::string encode_aligned(std::span<const AlignedSample> samples);
std::vector<AlignedSample> decode_aligned(std::string_view bytes);

}  // namespace adapt

#include "adapt/align.hpp"

#include <cmath>

#include "adapt/binary_io.hpp"
#include "adapt/spectral.hpp"

namespace adapt {

std::vector<KernelBounds> kernel_table(std::size_t in_size, std::size_t out_size) {
  if (in_size == 0 || out_size == 0) throw ContractViolation("kernel_table: sizes must be >= 1");
  std::vector<KernelBounds> out(out_size);
  for (std::size_t i = 0; i < out_size; ++i) out[i] = kernel_bounds(i, out_size, in_size);
  return out;
}

std::vector<double> adaptive_pool_1d(std::span<const double> values, std::size_t out_size) {
  if (values.empty() || out_size == 0) throw ContractViolation("adaptive_pool_1d: sizes must be >= 1");
  std::vector<double> out(out_size);
  for (std::size_t i = 0; i < out_size; ++i) {
    const auto k = kernel_bounds(i, out_size, values.size());
    double sum = 0.0;
    for (std::size_t j = k.start; j < k.end; ++j) sum += values[j];
    out[i] = sum / static_cast<double>(k.size());
  }
  return out;
}

Matrix<double> adaptive_pool_2d(const Matrix<double>& values, std::size_t out_rows, std::size_t out_cols) {
  if (values.empty() || out_rows == 0 || out_cols == 0) {
    throw ContractViolation("adaptive_pool_2d: all dimensions must be >= 1");
  }
  Matrix<double> out(out_rows, out_cols);
  for (std::size_t h = 0; h < out_rows; ++h) {
    const auto kh = kernel_bounds(h, out_rows, values.rows());
    for (std::size_t w = 0; w < out_cols; ++w) {
      const auto kw = kernel_bounds(w, out_cols, values.cols());
      double sum = 0.0;
      for (std::size_t r = kh.start; r < kh.end; ++r)
        for (std::size_t c = kw.start; c < kw.end; ++c) sum += values(r, c);
      out(h, w) = sum / static_cast<double>(kh.size() * kw.size());
    }
  }
  return out;
}

Matrix<double> truncate_or_pad(const Matrix<double>& values, std::size_t rows, std::size_t cols) {
  Matrix<double> out(rows, cols, 0.0);
  for (std::size_t r = 0; r < std::min(rows, values.rows()); ++r)
    for (std::size_t c = 0; c < std::min(cols, values.cols()); ++c) out(r, c) = values(r, c);
  return out;
}

namespace {

void zscore_columns(Matrix<double>& m) {
  const auto n = static_cast<double>(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c);
    mean /= n;
    double var = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) var += (m(r, c) - mean) * (m(r, c) - mean);
    const double sd = std::sqrt(var / n);
    for (std::size_t r = 0; r < m.rows(); ++r) {
      m(r, c) = sd <= kConstantChannelEps ? 0.0 : (m(r, c) - mean) / sd;
    }
  }
}

}  // namespace

AlignedSample align_sample(const RawSample& sample, const AlignConfig& cfg) {
  if (cfg.seq_len == 0 || cfg.channels == 0) throw ValidationError("align: output shape must be >= 1");
  auto spectrum = spectral_transform(sample.values);
  if (cfg.spectrum_zscore) zscore_columns(spectrum);
  AlignedSample out;
  if (cfg.method == AlignMethod::kAdaptivePool) {
    out.time_repr = adaptive_pool_2d(sample.values, cfg.seq_len, cfg.channels);
    out.freq_repr = adaptive_pool_2d(spectrum, cfg.seq_len, cfg.channels);
  } else {
    out.time_repr = truncate_or_pad(sample.values, cfg.seq_len, cfg.channels);
    out.freq_repr = truncate_or_pad(spectrum, cfg.seq_len, cfg.channels);
  }
  out.label = sample.label;
  out.dataset_id = sample.dataset_id;
  return out;
}

namespace {
constexpr std::string_view kAlignedMagic = "ADAS";
constexpr std::uint32_t kAlignedVersion = 1;
}  // namespace

std::string encode_aligned(std::span<const AlignedSample> samples) {
  io::ByteWriter w;
  w.bytes(kAlignedMagic);
  w.u32(kAlignedVersion);
  w.u64(samples.size());
  for (const auto& s : samples) {
    if (!s.time_repr.same_shape(s.freq_repr)) throw ContractViolation("encode_aligned: time/freq shape mismatch");
    w.u32(static_cast<std::uint32_t>(s.time_repr.rows()));
    w.u32(static_cast<std::uint32_t>(s.time_repr.cols()));
    w.i32(s.label ? static_cast<std::int32_t>(*s.label) : -1);
    w.u32(static_cast<std::uint32_t>(s.dataset_id.size()));
    w.bytes(s.dataset_id);
    for (double v : s.time_repr.flat()) w.f32(static_cast<float>(v));
    for (double v : s.freq_repr.flat()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

std::vector<AlignedSample> decode_aligned(std::string_view bytes) {
  io::ByteReader r(bytes);
  if (bytes.size() < 4 || r.bytes(4) != kAlignedMagic) throw FormatError("bad magic: not an ADAS aligned file");
  const auto version = r.u32();
  if (version != kAlignedVersion) throw FormatError("unsupported ADAS version " + std::to_string(version));
  const auto count = r.u64();
  std::vector<AlignedSample> out;
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto rows = r.u32();
    const auto cols = r.u32();
    const auto label = r.i32();
    const auto id_len = r.u32();
    AlignedSample s;
    s.dataset_id = std::string(r.bytes(id_len));
    if (rows == 0 || cols == 0) throw FormatError("aligned sample with zero shape");
    if (r.remaining() / 8 < std::uint64_t{rows} * cols) throw CorruptionError("aligned payload truncated");
    s.time_repr = Matrix<double>(rows, cols);
    s.freq_repr = Matrix<double>(rows, cols);
    for (auto& v : s.time_repr.flat()) v = r.f32();
    for (auto& v : s.freq_repr.flat()) v = r.f32();
    if (label >= 0) s.label = static_cast<std::uint32_t>(label);
    out.push_back(std::move(s));
  }
  if (!r.at_end()) throw FormatError("trailing bytes in aligned file");
  return out;
}

}  // namespace adapt

#include "adapt/spectral.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace adapt {

namespace {

using cd = std::complex<double>;

void fft_radix2(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles computed directly rather than by recurrence to keep error at O(eps log n).
        const cd w = std::polar(1.0, ang * static_cast<double>(k));
        const cd u = a[i + k];
        const cd v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

// Chirp-z: DFT of arbitrary length via a power-of-two circular convolution.
void fft_bluestein(std::vector<cd>& a) {
  const std::size_t n = a.size();
  const std::size_t m = std::bit_ceil(2 * n - 1);
  std::vector<cd> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small.
    const auto k2 = static_cast<double>((static_cast<unsigned long long>(k) * k) % (2 * n));
    chirp[k] = std::polar(1.0, -std::numbers::pi * k2 / static_cast<double>(n));
  }
  std::vector<cd> x(m, 0.0), y(m, 0.0);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
  y[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = std::conj(chirp[k]);
  fft_radix2(x, false);
  fft_radix2(y, false);
  for (std::size_t i = 0; i < m; ++i) x[i] *= y[i];
  fft_radix2(x, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
}

}  // namespace

void fft(std::vector<cd>& data) {
  if (data.size() <= 1) return;
  if (std::has_single_bit(data.size())) {
    fft_radix2(data, false);
  } else {
    fft_bluestein(data);
  }
}

Matrix<double> spectral_transform(const Matrix<double>& values) {
  const std::size_t n = values.rows();
  if (n == 0) throw ContractViolation("spectral_transform: empty series");
  const std::size_t bins = n / 2 + 1;
  Matrix<double> out(bins, values.cols());
  std::vector<cd> buf(n);
  for (std::size_t c = 0; c < values.cols(); ++c) {
    for (std::size_t t = 0; t < n; ++t) buf[t] = values(t, c);
    fft(buf);
    for (std::size_t k = 0; k < bins; ++k) out(k, c) = std::abs(buf[k]) / static_cast<double>(n);
  }
  return out;
}

}  // namespace adapt

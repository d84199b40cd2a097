#pragma once

#include <complex>
#include <span>
#include <vector>

#include "adapt/tensor.hpp"

namespace adapt {

// In-place forward DFT (no scaling). Radix-2 for powers of two, Bluestein otherwise.
void fft(std::vector<std::complex<double>>& data);

// Per channel: |DFT(x)_k| / length for k = 0..length/2. Output is (length/2 + 1) x channels.
Matrix<double> spectral_transform(const Matrix<double>& values);

}  // namespace adapt

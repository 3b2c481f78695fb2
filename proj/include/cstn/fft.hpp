#pragma once

#include <complex>
#include <cstdint>

namespace cstn::fft {

// In-place unnormalized DFT, sign -1 forward / +1 inverse. Mixed-radix
// Cooley-Tukey over the smallest prime factor, Bluestein for large prime
// lengths, so any length works. Double precision throughout; callers apply
// their own normalization.
void transform(std::complex<double>* a, int64_t n, int sign);

// Row-major 2-D transform, rows then columns.
void transform_2d(std::complex<double>* a, int64_t h, int64_t w, int sign);

}  // namespace cstn::fft

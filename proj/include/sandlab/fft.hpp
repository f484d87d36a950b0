#pragma once

#include <complex>
#include <vector>

namespace sandlab {

// Thin FFTW wrappers. FFTW planning is serialized behind a mutex; execution
// of distinct buffers is safe from concurrent threads.

/// In-place 2-D complex DFT of an n x n row-major array. sign = -1 forward,
/// +1 backward (unnormalized, FFTW convention).
void dft2d(std::vector<std::complex<double>>& a, int n, int sign);

/// In-place 2-D REDFT00 (DCT-I) of an n x n row-major array. Self-inverse up
/// to the factor 4(n-1)^2.
void dct1_2d(std::vector<double>& a, int n);

}  // namespace sandlab

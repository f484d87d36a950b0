#pragma once

#include <optional>
#include <utility>

#include "sandlab/field.hpp"
#include "sandlab/sparse_int.hpp"

namespace sandlab {

/// Graph Laplacian (Delta f)(x) = 4 f(x) - sum of the four neighbor values.
/// On windows, out-of-window neighbors read as zero.
Field laplacian(const Field& f);

/// k-fold forward difference along axis 1 or 2. Equals convolution with
/// delta_axis^{*k}.
Field discrete_derivative(const Field& f, int axis, int order = 1);

/// Circular convolution on tori (FFT above the size threshold, direct sum
/// below), zero-extended sum on windows. Both torus paths agree to 1e-12.
Field convolve(const Field& f, const Field& g);
Field convolve_direct(const Field& f, const Field& g);
Field convolve_fft(const Field& f, const Field& g);

/// Convolution of a dense field with a sparse integer field, exact in the
/// sparse weights. Cheap when the sparse support is small.
Field convolve(const Field& f, const SparseIntField& v);

inline constexpr int kConvolveFftThreshold = 32;

enum class IntClass { not_c0 = -1, c0 = 0, c1 = 1, c2 = 2, c3 = 3 };

/// Highest class C^k containing v. C^0 is automatic for finite integer
/// support; C^1 iff the total sum vanishes; C^2 iff additionally both first
/// moments vanish; C^3 is decided by the constructive row/column sweep
/// decomposition v = delta_1*f + delta_2*g with f,g in C^2.
IntClass class_membership(const SparseIntField& v);

/// For v in C^1: a decomposition v = delta_1*f + delta_2*g with f,g in C^0.
/// The sweep integrates rows first, then the column of row sums.
std::pair<SparseIntField, SparseIntField> c1_decomposition(const SparseIntField& v);

/// For v in C^3: a decomposition v = delta_1*f + delta_2*g with f,g in C^2,
/// obtained from the sweep by shifting the residual moments through the
/// (f,g) -> (f + c*delta_2, g - c*delta_1) freedom. Empty if v is not C^3.
std::optional<std::pair<SparseIntField, SparseIntField>> c3_decomposition(
    const SparseIntField& v);

}  // namespace sandlab

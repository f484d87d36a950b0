#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <vector>

namespace sandlab {

/// Dense square integer matrix in row-major order.
struct IntMatrix {
  int n = 0;
  std::vector<mpz_class> a;
  explicit IntMatrix(int n_) : n(n_), a(static_cast<std::size_t>(n_) * n_, 0) {}
  mpz_class& at(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
  const mpz_class& at(int i, int j) const {
    return a[static_cast<std::size_t>(i) * n + j];
  }
};

/// Exact determinant by Bareiss fraction-free elimination.
mpz_class bareiss_determinant(IntMatrix m);

/// Invariant factors d_1 | d_2 | ... | d_n (nonnegative) of the matrix.
std::vector<mpz_class> smith_normal_form(IntMatrix m);

/// Smith normal form that also returns the right unimodular multiplier Q
/// with D = P A Q. Columns of Q turn diagonal residues k_i/d_i into
/// characters of Z^n / A Z^n.
std::pair<std::vector<mpz_class>, IntMatrix> smith_normal_form_with_q(IntMatrix m);

}  // namespace sandlab

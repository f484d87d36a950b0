#include "sandlab/snf.hpp"

#include <algorithm>
#include <stdexcept>

namespace sandlab {

mpz_class bareiss_determinant(IntMatrix m) {
  int n = m.n;
  if (n == 0) return 1;
  mpz_class prev = 1;
  int sign = 1;
  for (int k = 0; k < n - 1; ++k) {
    if (m.at(k, k) == 0) {
      int piv = -1;
      for (int i = k + 1; i < n; ++i)
        if (m.at(i, k) != 0) {
          piv = i;
          break;
        }
      if (piv < 0) return 0;
      for (int j = k; j < n; ++j) std::swap(m.at(k, j), m.at(piv, j));
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i) {
      for (int j = k + 1; j < n; ++j) {
        mpz_class t = m.at(i, j) * m.at(k, k) - m.at(i, k) * m.at(k, j);
        mpz_divexact(m.at(i, j).get_mpz_t(), t.get_mpz_t(), prev.get_mpz_t());
      }
      m.at(i, k) = 0;
    }
    prev = m.at(k, k);
  }
  return sign * m.at(n - 1, n - 1);
}

namespace {

// Entry with minimal nonzero absolute value in the trailing submatrix
// starting at (k, k); (-1, -1) if that submatrix is zero.
std::pair<int, int> min_nonzero(const IntMatrix& m, int k) {
  int bi = -1, bj = -1;
  mpz_class best;
  for (int i = k; i < m.n; ++i)
    for (int j = k; j < m.n; ++j) {
      const mpz_class& v = m.at(i, j);
      if (v == 0) continue;
      mpz_class av = abs(v);
      if (bi < 0 || av < best) {
        best = av;
        bi = i;
        bj = j;
      }
    }
  return {bi, bj};
}

}  // namespace

namespace {

// Diagonalization by row/column operations. Column operations are mirrored
// into *q when tracking the right multiplier.
std::vector<mpz_class> snf_impl(IntMatrix& m, IntMatrix* q) {
  int n = m.n;
  std::vector<mpz_class> d(n, 0);

  auto col_swap = [&](int a, int b) {
    for (int i = 0; i < n; ++i) std::swap(m.at(i, a), m.at(i, b));
    if (q)
      for (int i = 0; i < n; ++i) std::swap(q->at(i, a), q->at(i, b));
  };
  auto col_addmul = [&](int dst, int src, const mpz_class& c) {
    for (int i = 0; i < n; ++i) m.at(i, dst) += c * m.at(i, src);
    if (q)
      for (int i = 0; i < n; ++i) q->at(i, dst) += c * q->at(i, src);
  };

  for (int k = 0; k < n; ++k) {
    auto [pi, pj] = min_nonzero(m, k);
    if (pi < 0) break;  // rest of the diagonal stays 0
    for (int j = 0; j < n; ++j) std::swap(m.at(k, j), m.at(pi, j));
    col_swap(k, pj);

    bool clean = false;
    while (!clean) {
      clean = true;
      for (int i = k + 1; i < n; ++i) {
        if (m.at(i, k) == 0) continue;
        mpz_class qq = m.at(i, k) / m.at(k, k);
        if (qq != 0)
          for (int j = 0; j < n; ++j) m.at(i, j) -= qq * m.at(k, j);
        if (m.at(i, k) != 0) {
          // Remainder beats the pivot: promote it and restart.
          for (int j = 0; j < n; ++j) std::swap(m.at(k, j), m.at(i, j));
          clean = false;
        }
      }
      if (!clean) continue;
      for (int j = k + 1; j < n; ++j) {
        if (m.at(k, j) == 0) continue;
        mpz_class qq = m.at(k, j) / m.at(k, k);
        if (qq != 0) col_addmul(j, k, -qq);
        if (m.at(k, j) != 0) {
          col_swap(k, j);
          clean = false;
        }
      }
      if (!clean) continue;
      // Divisibility: the pivot must divide every trailing entry.
      for (int i = k + 1; i < n && clean; ++i)
        for (int j = k + 1; j < n && clean; ++j)
          if (m.at(i, j) % m.at(k, k) != 0) {
            for (int jj = 0; jj < n; ++jj) m.at(k, jj) += m.at(i, jj);
            clean = false;
          }
    }
    d[k] = abs(m.at(k, k));
  }
  return d;
}

}  // namespace

std::vector<mpz_class> smith_normal_form(IntMatrix m) {
  return snf_impl(m, nullptr);
}

std::pair<std::vector<mpz_class>, IntMatrix> smith_normal_form_with_q(IntMatrix m) {
  IntMatrix q(m.n);
  for (int i = 0; i < m.n; ++i) q.at(i, i) = 1;
  auto d = snf_impl(m, &q);
  return {std::move(d), std::move(q)};
}

}  // namespace sandlab

#pragma once

#include <memory>
#include <vector>

#include "sandlab/calculus.hpp"
#include "sandlab/field.hpp"
#include "sandlab/sparse_int.hpp"

namespace sandlab {

/// A tabulated Green's function together with how it was produced.
struct GreensTable {
  enum class Method { dft, series };
  Field values;
  Method method = Method::dft;
  int torus_size_used = 0;       // final m for window tables
  double doubling_residual = 0;  // max window change at the accepted doubling

  explicit GreensTable(Field f) : values(std::move(f)) {}
  const Domain& domain() const { return values.domain(); }
};

/// Green's function on the torus T_m: the mean-zero solution of
/// Delta G = e_0 - 1/m^2, computed by the inverse transform of
/// 1/(4 - 2cos - 2cos) with the zero frequency excluded.
GreensTable greens_torus(int m);

/// Green's function on Z^2 restricted to the l1 window of the given radius,
/// normalized G(0,0) = 0. Computed by large-torus restriction: the torus
/// table satisfies G_T(x) - G_T(0) - |x|^2/(4m^2) = G_Z2(x) + O(m^-4)
/// locally (the quadratic term solves Delta u = -1/m^2 exactly), and the
/// residual expansion in m^-2 is removed by Richardson extrapolation over
/// three doublings. Throws if the doubling residual fails to reach 1e-9.
GreensTable greens_z2(int window_radius);

/// Process-wide caches; tables are immutable once built.
std::shared_ptr<const GreensTable> cached_greens_torus(int m);
std::shared_ptr<const GreensTable> cached_greens_z2(int window_radius);

struct AsymptoticFit {
  double a = 0;
  double b = 0;
  double residual_exponent = 0;
  // a refitted on the inner half-annulus, for the stability check
  double a_inner = 0;
};

/// Least-squares fit of G = -log|x|/(2 pi) - a - b (8 x1^2 x2^2/|x|^4 - 1)/|x|^2
/// over the annulus M/4 <= |x|_2 <= M/2 of a Z^2 window table, plus the decay
/// exponent of the post-fit residuals over dyadic annuli.
AsymptoticFit fit_asymptotics(const GreensTable& table);

struct DecayReport {
  int a = 0, b = 0;
  std::vector<double> annulus_radii;
  std::vector<double> annulus_sup;  // sup of r^{a+b} |D1^a D2^b G| per annulus
  bool bounded = false;
  double first_derivative_constant = 0;  // fitted c for a+b = 1, else 0
};

/// Decay scan of D1^a D2^b G_{T_m} over dyadic annuli 4 <= r <= m/4.
DecayReport derivative_decay_report(int m, int a, int b);

struct LpReport {
  int a = 0, b = 0, p = 0;
  std::vector<double> window_radii;
  std::vector<double> partial_sums;    // sum of |D^a D^b G|^p over l1 windows
  std::vector<double> annulus_radii;   // dyadic annuli (>= 16 sites each)
  std::vector<double> annulus_sums;
  double tail_exponent = 0;            // log-log slope of annulus sums
  bool member = false;
};

/// Partial l^p sums of D1^a D2^b G_{Z^2} over growing windows with a fitted
/// tail exponent; membership verdict from geometric-series convergence of the
/// dyadic annulus sums.
LpReport lp_membership_report(int a, int b, int p);

/// n-th convolution power of the simple random walk step measure, tabulated
/// on the l1 window of radius n. Computed in the transform domain.
Field convolution_power(int n);

/// Leading Gaussian term exp(-|x|^2/n)/(pi n) on the same window, for
/// comparison against the parity-averaged walk.
Field gaussian_main_term(int n);

/// l2(Z^2) norm squared of G_{Z^2} * v for v in C^2, computed by Parseval on
/// large tori with Richardson extrapolation in 1/m^2. For v = delta1*delta2
/// this reproduces 1/(2 pi) to 1e-9.
double norm2_z2_spectral(const SparseIntField& v);

}  // namespace sandlab

#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

namespace sandlab {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// cos(2*pi*t), the real part of the additive character.
inline double cos2pi(double t) { return std::cos(kTwoPi * t); }
inline double sin2pi(double t) { return std::sin(kTwoPi * t); }

/// Distance from t to the nearest integer.
inline double dist_to_z(double t) {
  double f = t - std::round(t);
  return std::abs(f);
}

/// Reduce t into [-1/2, 1/2).
inline double wrap_half_open(double t) {
  double f = t - std::round(t);
  if (f >= 0.5) f -= 1.0;   // round-half-even can land on +0.5
  if (f < -0.5) f += 1.0;
  return f;
}

// Compensated summation. Used on every gamma-critical accumulation.
class KahanSum {
 public:
  void add(double x) {
    double y = x - c_;
    double t = s_ + y;
    c_ = (t - s_) - y;
    s_ = t;
  }
  double value() const { return s_; }

 private:
  double s_ = 0.0;
  double c_ = 0.0;
};

class KahanComplexSum {
 public:
  void add(std::complex<double> z) {
    re_.add(z.real());
    im_.add(z.imag());
  }
  std::complex<double> value() const { return {re_.value(), im_.value()}; }

 private:
  KahanSum re_, im_;
};

/// Worker count: SANDLAB_THREADS env var, else hardware concurrency.
unsigned worker_count();

/// Runs fn(i) for i in [0, n). Blocks until done. Work is split statically
/// by index so reductions done per-index stay deterministic.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y ~ slope*x + intercept.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace sandlab

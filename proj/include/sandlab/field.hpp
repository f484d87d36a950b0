#pragma once

#include <vector>

#include "sandlab/domain.hpp"
#include "sandlab/util.hpp"

namespace sandlab {

/// Dense real-valued function on a Domain. Fields are immutable in spirit:
/// operations return fresh fields, so they are safe to share across workers.
/// On window domains the storage covers the bounding box; entries outside
/// the l1 ball are kept at zero.
class Field {
 public:
  explicit Field(Domain domain)
      : domain_(domain), values_(domain.storage_size(), 0.0) {}

  const Domain& domain() const { return domain_; }

  double operator()(Coord x) const { return values_[domain_.index(x)]; }
  double& at(Coord x) { return values_[domain_.index(x)]; }

  /// Value with zero extension: out-of-window reads give 0.
  double value_or_zero(Coord x) const {
    if (!domain_.contains(x)) return 0.0;
    return values_[domain_.index(x)];
  }

  const std::vector<double>& raw() const { return values_; }
  std::vector<double>& raw() { return values_; }

  double sum() const {
    KahanSum s;
    for (Coord x : domain_.sites()) s.add((*this)(x));
    return s.value();
  }
  double mean() const { return sum() / static_cast<double>(domain_.site_count()); }

  double norm2_squared() const {
    KahanSum s;
    for (Coord x : domain_.sites()) {
      double v = (*this)(x);
      s.add(v * v);
    }
    return s.value();
  }

  double max_abs() const {
    double m = 0.0;
    for (Coord x : domain_.sites()) m = std::max(m, std::abs((*this)(x)));
    return m;
  }

  bool all_finite() const {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  /// Translation T_a f(x) = f(x - a). Torus only (windows would leak mass).
  Field translated(Coord a) const;

  Field operator+(const Field& o) const;
  Field operator-(const Field& o) const;
  Field scaled(double c) const;

 private:
  Domain domain_;
  std::vector<double> values_;
};

}  // namespace sandlab

#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "sandlab/domain.hpp"
#include "sandlab/field.hpp"

namespace sandlab {

/// Finitely supported integer-valued function (prevectors, toppling vectors,
/// members of the classes C^0..C^3). Integrality is exact; zero entries are
/// never stored. On a torus domain, coordinates are reduced mod m.
class SparseIntField {
 public:
  explicit SparseIntField(Domain domain) : domain_(domain) {}

  const Domain& domain() const { return domain_; }
  const std::map<Coord, std::int64_t>& entries() const { return entries_; }

  std::int64_t value(Coord x) const {
    auto it = entries_.find(canon(x));
    return it == entries_.end() ? 0 : it->second;
  }

  void set(Coord x, std::int64_t v) {
    Coord c = canon(x);
    if (v == 0)
      entries_.erase(c);
    else
      entries_[c] = v;
  }

  void add(Coord x, std::int64_t v) { set(x, value(x) + v); }

  bool empty() const { return entries_.empty(); }
  std::size_t support_size() const { return entries_.size(); }

  std::vector<Coord> support() const {
    std::vector<Coord> s;
    s.reserve(entries_.size());
    for (const auto& [x, v] : entries_) s.push_back(x);
    return s;
  }

  std::int64_t norm1() const {
    std::int64_t n = 0;
    for (const auto& [x, v] : entries_) n += std::abs(v);
    return n;
  }

  std::int64_t norm_inf() const {
    std::int64_t n = 0;
    for (const auto& [x, v] : entries_) n = std::max(n, std::abs(v));
    return n;
  }

  std::int64_t sum() const {
    std::int64_t s = 0;
    for (const auto& [x, v] : entries_) s += v;
    return s;
  }

  /// First moments sum_x v(x) * x, read in Z^2 coordinates (torus entries use
  /// their stored representatives; meaningful when the support embeds).
  std::int64_t moment_i() const {
    std::int64_t s = 0;
    for (const auto& [x, v] : entries_) s += v * x.i;
    return s;
  }
  std::int64_t moment_j() const {
    std::int64_t s = 0;
    for (const auto& [x, v] : entries_) s += v * x.j;
    return s;
  }

  SparseIntField operator+(const SparseIntField& o) const {
    SparseIntField out = *this;
    for (const auto& [x, v] : o.entries_) out.add(x, v);
    return out;
  }

  SparseIntField operator-(const SparseIntField& o) const {
    SparseIntField out = *this;
    for (const auto& [x, v] : o.entries_) out.add(x, -v);
    return out;
  }

  SparseIntField negated() const {
    SparseIntField out(domain_);
    for (const auto& [x, v] : entries_) out.set(x, -v);
    return out;
  }

  SparseIntField translated(Coord a) const {
    SparseIntField out(domain_);
    for (const auto& [x, v] : entries_) out.set({x.i + a.i, x.j + a.j}, v);
    return out;
  }

  /// Exact integer convolution (f*g)(x) = sum_y f(x-y) g(y).
  SparseIntField convolve(const SparseIntField& o) const {
    SparseIntField out(domain_);
    for (const auto& [y, vy] : o.entries_)
      for (const auto& [z, vz] : entries_)
        out.add({z.i + y.i, z.j + y.j}, vz * vy);
    return out;
  }

  Field to_field() const {
    Field f(domain_);
    for (const auto& [x, v] : entries_) f.at(x) = static_cast<double>(v);
    return f;
  }

  friend bool operator==(const SparseIntField& a, const SparseIntField& b) {
    return a.entries_ == b.entries_;
  }

 private:
  Coord canon(Coord x) const {
    if (domain_.is_torus()) return {domain_.mod_m(x.i), domain_.mod_m(x.j)};
    return x;
  }

  Domain domain_;
  std::map<Coord, std::int64_t> entries_;
};

/// Standard basis vector e_x.
SparseIntField basis_vector(Domain d, Coord x);

/// delta_1: -1 at (0,0), +1 at (-1,0), so that delta_1 * f = D_1 f.
SparseIntField delta1(Domain d);

/// delta_2: -1 at (0,0), +1 at (0,-1), so that delta_2 * f = D_2 f.
SparseIntField delta2(Domain d);

/// Graph Laplacian of a sparse integer field, exact in integers.
SparseIntField laplacian(const SparseIntField& w);

}  // namespace sandlab

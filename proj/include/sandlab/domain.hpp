#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

namespace sandlab {

struct Coord {
  int i = 0;
  int j = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

inline int l1_norm(Coord x) { return std::abs(x.i) + std::abs(x.j); }

/// A lattice domain: either the torus (Z/m)^2 or the finite window
/// {x in Z^2 : |x|_1 <= R}. Window computations use zero extension beyond
/// the boundary; callers that need tail estimates know the radius.
class Domain {
 public:
  enum class Kind { torus, window };

  static Domain torus(int m) {
    if (m < 2) throw std::invalid_argument("torus side must be >= 2");
    return Domain(Kind::torus, m, 0);
  }
  static Domain window(int radius) {
    if (radius < 0) throw std::invalid_argument("window radius must be >= 0");
    return Domain(Kind::window, 0, radius);
  }

  Kind kind() const { return kind_; }
  bool is_torus() const { return kind_ == Kind::torus; }
  int m() const { return m_; }
  int radius() const { return radius_; }

  /// Linear storage size (torus: m^2; window: dense (2R+1)^2 bounding box).
  std::size_t storage_size() const {
    if (is_torus()) return static_cast<std::size_t>(m_) * m_;
    std::size_t side = 2 * static_cast<std::size_t>(radius_) + 1;
    return side * side;
  }

  /// Number of lattice sites actually in the domain.
  std::size_t site_count() const {
    if (is_torus()) return static_cast<std::size_t>(m_) * m_;
    std::size_t r = radius_;
    return 2 * r * r + 2 * r + 1;
  }

  bool contains(Coord x) const {
    if (is_torus()) return true;
    return l1_norm(x) <= radius_;
  }

  /// Storage index. Torus coordinates are reduced mod m; window coordinates
  /// must lie in the bounding box.
  std::size_t index(Coord x) const {
    if (is_torus()) {
      int i = mod_m(x.i), j = mod_m(x.j);
      return static_cast<std::size_t>(i) * m_ + j;
    }
    int side = 2 * radius_ + 1;
    return static_cast<std::size_t>(x.i + radius_) * side + (x.j + radius_);
  }

  Coord coord(std::size_t idx) const {
    if (is_torus()) {
      return {static_cast<int>(idx / m_), static_cast<int>(idx % m_)};
    }
    int side = 2 * radius_ + 1;
    return {static_cast<int>(idx / side) - radius_,
            static_cast<int>(idx % side) - radius_};
  }

  int mod_m(int t) const {
    int r = t % m_;
    return r < 0 ? r + m_ : r;
  }

  /// Signed representative of t mod m in [-m/2, m/2).
  int signed_rep(int t) const {
    int r = mod_m(t);
    return r >= (m_ + 1) / 2 ? r - m_ : r;
  }

  /// Quotient l1 distance on the torus; plain l1 distance on windows.
  int distance(Coord x, Coord y) const {
    if (!is_torus()) return l1_norm({x.i - y.i, x.j - y.j});
    int di = std::abs(signed_rep(x.i - y.i));
    int dj = std::abs(signed_rep(x.j - y.j));
    return di + dj;
  }

  /// All domain sites, in storage order (valid window sites only).
  std::vector<Coord> sites() const {
    std::vector<Coord> out;
    out.reserve(site_count());
    if (is_torus()) {
      for (int i = 0; i < m_; ++i)
        for (int j = 0; j < m_; ++j) out.push_back({i, j});
    } else {
      for (int i = -radius_; i <= radius_; ++i)
        for (int j = -radius_; j <= radius_; ++j)
          if (std::abs(i) + std::abs(j) <= radius_) out.push_back({i, j});
    }
    return out;
  }

  friend bool operator==(const Domain&, const Domain&) = default;

 private:
  Domain(Kind k, int m, int radius) : kind_(k), m_(m), radius_(radius) {}
  Kind kind_;
  int m_;
  int radius_;
};

inline std::array<Coord, 4> neighbors(Coord x) {
  return {{{x.i - 1, x.j}, {x.i + 1, x.j}, {x.i, x.j - 1}, {x.i, x.j + 1}}};
}

}  // namespace sandlab

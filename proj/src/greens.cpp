#include "sandlab/greens.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "sandlab/fft.hpp"
#include "sandlab/util.hpp"

namespace sandlab {

namespace {

double symbol(double cx, double cy) { return 4.0 - 2.0 * (cx + cy); }

/// Torus Green's values on the quadrant i,j in [0, m/2] via 2-D DCT-I.
/// Requires even m. The frequency array is loaded with the open-chain
/// weights that make REDFT00 reproduce the full symmetric torus sum.
std::vector<double> torus_quadrant_dct(int m) {
  int n = m / 2 + 1;
  std::vector<double> cos_tab(n);
  for (int k = 0; k < n; ++k) cos_tab[k] = std::cos(kTwoPi * k / m);
  std::vector<double> a(static_cast<std::size_t>(n) * n);
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      if (x == 0 && y == 0) {
        a[0] = 0.0;  // zero frequency excluded: mean-zero table
      } else {
        a[static_cast<std::size_t>(x) * n + y] =
            1.0 / symbol(cos_tab[x], cos_tab[y]);
      }
    }
  dct1_2d(a, n);
  double scale = 1.0 / (static_cast<double>(m) * m);
  for (auto& v : a) v *= scale;
  return a;  // a[i*n+j] = G(i,j), 0 <= i,j <= m/2
}

/// O(m^3) separable evaluation, any m >= 2. Returns the same quadrant
/// layout (i,j in [0, ceil(m/2)]).
std::vector<double> torus_quadrant_direct(int m) {
  int half = m / 2;          // even m: m/2; odd m: (m-1)/2
  int n = half + 1;
  std::vector<double> cos_tab(m);
  for (int k = 0; k < m; ++k) cos_tab[k] = std::cos(kTwoPi * k / m);
  // c[x][j] = sum_y cos(2 pi j y / m) / symbol(x, y)
  std::vector<double> c(static_cast<std::size_t>(m) * n);
  parallel_for(m, [&](std::size_t xs) {
    int x = static_cast<int>(xs);
    for (int j = 0; j < n; ++j) {
      KahanSum s;
      for (int y = 0; y < m; ++y) {
        if (x == 0 && y == 0) continue;
        s.add(cos_tab[(static_cast<long long>(j) * y) % m] /
              symbol(cos_tab[x], cos_tab[y]));
      }
      c[xs * n + j] = s.value();
    }
  });
  std::vector<double> g(static_cast<std::size_t>(n) * n);
  parallel_for(n, [&](std::size_t is) {
    int i = static_cast<int>(is);
    for (int j = 0; j < n; ++j) {
      KahanSum s;
      for (int x = 0; x < m; ++x)
        s.add(cos_tab[(static_cast<long long>(i) * x) % m] *
              c[static_cast<std::size_t>(x) * n + j]);
      g[is * n + j] = s.value() / (static_cast<double>(m) * m);
    }
  });
  return g;
}

Field quadrant_to_field(const std::vector<double>& q, int m) {
  int n = m / 2 + 1;
  Field f(Domain::torus(m));
  for (int i = 0; i < m; ++i) {
    int qi = std::min(i, m - i);
    for (int j = 0; j < m; ++j) {
      int qj = std::min(j, m - j);
      f.at({i, j}) = q[static_cast<std::size_t>(qi) * n + qj];
    }
  }
  return f;
}

constexpr int kDctCutoff = 256;  // below this the O(m^3) route is cheaper

/// Quadrant table accessor valid for both layouts.
struct Quadrant {
  std::vector<double> q;
  int n;
  double at(int i, int j) const {
    return q[static_cast<std::size_t>(i) * n + j];
  }
};

Quadrant torus_quadrant(int m) {
  if (m % 2 == 0 && m >= kDctCutoff) return {torus_quadrant_dct(m), m / 2 + 1};
  return {torus_quadrant_direct(m), m / 2 + 1};
}

/// One corrected window restriction: G_T(x) - G_T(0) - |x|^2/(4 m^2) on the
/// l1 window of the given radius.
std::vector<double> corrected_window(int radius, int m) {
  Quadrant q = torus_quadrant(m);
  Domain win = Domain::window(radius);
  std::vector<double> out(win.storage_size(), 0.0);
  double g0 = q.at(0, 0);
  double inv4m2 = 0.25 / (static_cast<double>(m) * m);
  for (Coord x : win.sites()) {
    int i = std::abs(x.i), j = std::abs(x.j);
    double r2 = static_cast<double>(x.i) * x.i + static_cast<double>(x.j) * x.j;
    out[win.index(x)] = q.at(i, j) - g0 - r2 * inv4m2;
  }
  return out;
}

int pow2_at_least(int v) {
  int p = 1;
  while (p < v) p *= 2;
  return p;
}

}  // namespace

GreensTable greens_torus(int m) {
  if (m < 2) throw std::invalid_argument("greens_torus: m >= 2 required");
  Quadrant q = torus_quadrant(m);
  GreensTable t(quadrant_to_field(q.q, m));
  t.method = GreensTable::Method::dft;
  t.torus_size_used = m;
  return t;
}

GreensTable greens_z2(int window_radius) {
  if (window_radius < 1) throw std::invalid_argument("greens_z2: radius >= 1");
  // Three corrected restrictions at m, 2m, 4m; Neville in 1/m^2 removes the
  // m^-4 and m^-6 residues. The doubling check compares the two one-level
  // extrapolants.
  int m0 = std::max(512, pow2_at_least(4 * window_radius));
  Domain win = Domain::window(window_radius);
  const int max_rounds = 2;
  for (int round = 0; round < max_rounds; ++round) {
    std::vector<double> w0 = corrected_window(window_radius, m0);
    std::vector<double> w1 = corrected_window(window_radius, 2 * m0);
    std::vector<double> w2 = corrected_window(window_radius, 4 * m0);
    std::size_t sz = w0.size();
    double residual = 0.0;
    Field vals(win);
    for (std::size_t k = 0; k < sz; ++k) {
      double e1 = (16.0 * w1[k] - w0[k]) / 15.0;
      double e2 = (16.0 * w2[k] - w1[k]) / 15.0;
      residual = std::max(residual, std::abs(e2 - e1));
      vals.raw()[k] = (64.0 * e2 - e1) / 63.0;
    }
    if (residual <= 1e-9) {
      vals.at({0, 0}) = 0.0;  // exact normalization
      GreensTable t(std::move(vals));
      t.method = GreensTable::Method::dft;
      t.torus_size_used = 4 * m0;
      t.doubling_residual = residual;
      return t;
    }
    m0 *= 2;
  }
  throw std::runtime_error("greens_z2: doubling sequence did not converge to 1e-9");
}

namespace {
std::mutex cache_mutex;
std::map<int, std::shared_ptr<const GreensTable>> torus_cache;
std::map<int, std::shared_ptr<const GreensTable>> z2_cache;
}  // namespace

std::shared_ptr<const GreensTable> cached_greens_torus(int m) {
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = torus_cache.find(m);
    if (it != torus_cache.end()) return it->second;
  }
  auto t = std::make_shared<const GreensTable>(greens_torus(m));
  std::lock_guard<std::mutex> lock(cache_mutex);
  return torus_cache.emplace(m, t).first->second;
}

std::shared_ptr<const GreensTable> cached_greens_z2(int window_radius) {
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    // any cached table at least as wide will do
    auto it = z2_cache.lower_bound(window_radius);
    if (it != z2_cache.end()) return it->second;
  }
  auto t = std::make_shared<const GreensTable>(greens_z2(window_radius));
  std::lock_guard<std::mutex> lock(cache_mutex);
  return z2_cache.emplace(window_radius, t).first->second;
}

AsymptoticFit fit_asymptotics(const GreensTable& table) {
  const Domain& d = table.domain();
  if (d.is_torus() || d.radius() < 64)
    throw std::invalid_argument("fit_asymptotics: Z^2 window with M >= 64 required");
  int M = d.radius();

  auto fit_annulus = [&](double rlo, double rhi) {
    // Normal equations for y = -a - b*phi, y = G + log|x|/(2 pi).
    double s11 = 0, s1p = 0, spp = 0, s1y = 0, spy = 0;
    long count = 0;
    for (Coord x : d.sites()) {
      double r2 = static_cast<double>(x.i) * x.i + static_cast<double>(x.j) * x.j;
      double r = std::sqrt(r2);
      if (r < rlo || r > rhi) continue;
      double y = table.values(x) + std::log(r) / (2.0 * M_PI);
      double phi = (8.0 * x.i * x.i * x.j * x.j / (r2 * r2) - 1.0) / r2;
      s11 += 1.0;
      s1p += phi;
      spp += phi * phi;
      s1y += y;
      spy += phi * y;
      ++count;
    }
    if (count < 8) throw std::runtime_error("fit_asymptotics: annulus too thin");
    // Solve [s11 s1p; s1p spp] [-a; -b] = [s1y; spy]
    double det = s11 * spp - s1p * s1p;
    if (std::abs(det) < 1e-12 * s11 * spp)
      throw std::runtime_error("fit_asymptotics: ill-conditioned fit");
    double na = (spp * s1y - s1p * spy) / det;
    double nb = (s11 * spy - s1p * s1y) / det;
    return std::pair<double, double>{-na, -nb};
  };

  AsymptoticFit fit;
  auto [a, b] = fit_annulus(M / 4.0, M / 2.0);
  fit.a = a;
  fit.b = b;
  auto [a2, b2] = fit_annulus(M / 8.0, M / 4.0);
  fit.a_inner = a2;

  // Residual decay: max |G - model| per dyadic annulus, log-log slope.
  std::vector<double> lr, lres;
  for (double r0 = 4.0; 2.0 * r0 <= M / 2.0 + 1e-9; r0 *= 2.0) {
    double worst = 0.0;
    for (Coord x : d.sites()) {
      double r2 = static_cast<double>(x.i) * x.i + static_cast<double>(x.j) * x.j;
      double r = std::sqrt(r2);
      if (r < r0 || r >= 2.0 * r0) continue;
      double phi = (8.0 * x.i * x.i * x.j * x.j / (r2 * r2) - 1.0) / r2;
      double model = -std::log(r) / (2.0 * M_PI) - fit.a - fit.b * phi;
      worst = std::max(worst, std::abs(table.values(x) - model));
    }
    if (worst > 0) {
      lr.push_back(std::log(r0 * 1.5));
      lres.push_back(std::log(worst));
    }
  }
  fit.residual_exponent = linear_fit(lr, lres).slope;
  return fit;
}

DecayReport derivative_decay_report(int m, int a, int b) {
  if (m < 64) throw std::invalid_argument("derivative_decay_report: m >= 64");
  if (a + b < 1 || a + b > 3) throw std::invalid_argument("need 1 <= a+b <= 3");
  auto table = cached_greens_torus(m);
  Field dg = table->values;
  if (a > 0) dg = discrete_derivative(dg, 1, a);
  if (b > 0) dg = discrete_derivative(dg, 2, b);

  DecayReport rep;
  rep.a = a;
  rep.b = b;
  int k = a + b;
  for (double r0 = 4.0; 2.0 * r0 <= m / 4.0 + 1e-9; r0 *= 2.0) {
    double sup = 0.0;
    for (int i = -m / 2 + 1; i <= m / 2; ++i)
      for (int j = -m / 2 + 1; j <= m / 2; ++j) {
        double r = std::hypot(i, j);
        if (r < r0 || r >= 2.0 * r0) continue;
        double val = std::abs(dg({i, j})) * std::pow(r, k);
        sup = std::max(sup, val);
      }
    rep.annulus_radii.push_back(r0 * 1.5);
    rep.annulus_sup.push_back(sup);
  }
  double mx = *std::max_element(rep.annulus_sup.begin(), rep.annulus_sup.end());
  double mn = *std::min_element(rep.annulus_sup.begin(), rep.annulus_sup.end());
  rep.bounded = mn > 0 && mx / mn < 8.0;

  if (k == 1) {
    // Fit D1 G ~ -c i/(i^2+j^2) (or D2 with i <-> j) over 8 <= r <= m/8.
    double num = 0, den = 0;
    for (int i = -m / 2 + 1; i <= m / 2; ++i)
      for (int j = -m / 2 + 1; j <= m / 2; ++j) {
        double r2 = static_cast<double>(i) * i + static_cast<double>(j) * j;
        double r = std::sqrt(r2);
        if (r < 8.0 || r > m / 8.0) continue;
        double basis = (a == 1 ? -i : -j) / r2;
        num += basis * dg({i, j});
        den += basis * basis;
      }
    rep.first_derivative_constant = num / den;
  }
  return rep;
}

LpReport lp_membership_report(int a, int b, int p) {
  if (a + b < 1 || a + b > 3) throw std::invalid_argument("need 1 <= a+b <= 3");
  if (p != 1 && p != 2 && p != 4) throw std::invalid_argument("p in {1,2,4}");
  auto table = cached_greens_z2(145);
  Field dg = table->values;
  if (a > 0) dg = discrete_derivative(dg, 1, a);
  if (b > 0) dg = discrete_derivative(dg, 2, b);
  int usable = table->domain().radius() - (a + b);  // forward differences leak

  LpReport rep;
  rep.a = a;
  rep.b = b;
  rep.p = p;
  for (int R = 4; R <= usable; R *= 2) {
    KahanSum s;
    for (Coord x : table->domain().sites()) {
      if (l1_norm(x) > R) continue;
      s.add(std::pow(std::abs(dg(x)), p));
    }
    rep.window_radii.push_back(R);
    rep.partial_sums.push_back(s.value());
  }
  for (double r0 = 2.0; 2.0 * r0 <= usable / 1.42; r0 *= 2.0) {
    KahanSum s;
    long count = 0;
    for (Coord x : table->domain().sites()) {
      double r = std::hypot(x.i, x.j);
      if (r < r0 || r >= 2.0 * r0) continue;
      if (l1_norm(x) > usable) continue;
      s.add(std::pow(std::abs(dg(x)), p));
      ++count;
    }
    if (count < 16) continue;  // thin annuli excluded from the fit
    rep.annulus_radii.push_back(r0 * 1.5);
    rep.annulus_sums.push_back(s.value());
  }
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < rep.annulus_radii.size(); ++k) {
    if (rep.annulus_sums[k] <= 0) continue;
    lx.push_back(std::log(rep.annulus_radii[k]));
    ly.push_back(std::log(rep.annulus_sums[k]));
  }
  rep.tail_exponent = linear_fit(lx, ly).slope;
  rep.member = rep.tail_exponent < -0.5;
  return rep;
}

Field convolution_power(int n) {
  if (n < 0) throw std::invalid_argument("convolution_power: n >= 0");
  Domain win = Domain::window(n);
  Field out(win);
  if (n == 0) {
    out.at({0, 0}) = 1.0;
    return out;
  }
  int M = pow2_at_least(2 * n + 2);
  int half = M / 2 + 1;
  std::vector<double> cos_tab(half);
  for (int k = 0; k < half; ++k) cos_tab[k] = std::cos(kTwoPi * k / M);
  std::vector<double> a(static_cast<std::size_t>(half) * half);
  for (int x = 0; x < half; ++x)
    for (int y = 0; y < half; ++y)
      a[static_cast<std::size_t>(x) * half + y] =
          std::pow(0.5 * (cos_tab[x] + cos_tab[y]), n);
  dct1_2d(a, half);
  double scale = 1.0 / (static_cast<double>(M) * M);
  for (Coord x : win.sites()) {
    int i = std::abs(x.i), j = std::abs(x.j);
    out.at(x) = a[static_cast<std::size_t>(i) * half + j] * scale;
  }
  return out;
}

Field gaussian_main_term(int n) {
  Domain win = Domain::window(n);
  Field out(win);
  for (Coord x : win.sites()) {
    double r2 = static_cast<double>(x.i) * x.i + static_cast<double>(x.j) * x.j;
    out.at(x) = std::exp(-r2 / n) / (M_PI * n);
  }
  return out;
}

double norm2_z2_spectral(const SparseIntField& v) {
  if (class_membership(v) < IntClass::c2)
    throw std::invalid_argument("norm2_z2_spectral: v must be in C^2");
  if (v.empty()) return 0.0;
  std::vector<Coord> supp = v.support();
  std::vector<double> w;
  for (Coord x : supp) w.push_back(static_cast<double>(v.value(x)));

  auto riemann = [&](int m) {
    KahanSum total;
    for (int x = 0; x < m; ++x) {
      double cx = std::cos(kTwoPi * x / m);
      KahanSum row;
      for (int y = 0; y < m; ++y) {
        if (x == 0 && y == 0) continue;
        double cy = std::cos(kTwoPi * y / m);
        double re = 0, im = 0;
        for (std::size_t s = 0; s < supp.size(); ++s) {
          double phase = -(static_cast<double>(supp[s].i) * x +
                           static_cast<double>(supp[s].j) * y) /
                         m;
          re += w[s] * cos2pi(phase);
          im += w[s] * sin2pi(phase);
        }
        double sym = symbol(cx, cy);
        row.add((re * re + im * im) / (sym * sym));
      }
      total.add(row.value());
    }
    return total.value() / (static_cast<double>(m) * m);
  };

  double s0 = riemann(512), s1 = riemann(1024), s2 = riemann(2048);
  double e1 = (4.0 * s1 - s0) / 3.0;
  double e2 = (4.0 * s2 - s1) / 3.0;
  return (16.0 * e2 - e1) / 15.0;
}

}  // namespace sandlab

#include "sandlab/calculus.hpp"

#include <stdexcept>

#include "sandlab/fft.hpp"

namespace sandlab {

Field laplacian(const Field& f) {
  Field out(f.domain());
  for (Coord x : f.domain().sites()) {
    double v = 4.0 * f(x);
    for (Coord n : neighbors(x)) v -= f.value_or_zero(n);
    out.at(x) = v;
  }
  return out;
}

Field discrete_derivative(const Field& f, int axis, int order) {
  if (axis != 1 && axis != 2) throw std::invalid_argument("axis must be 1 or 2");
  if (order < 1) throw std::invalid_argument("order must be >= 1");
  Field cur = f;
  for (int k = 0; k < order; ++k) {
    Field next(f.domain());
    for (Coord x : f.domain().sites()) {
      Coord fwd = axis == 1 ? Coord{x.i + 1, x.j} : Coord{x.i, x.j + 1};
      next.at(x) = cur.value_or_zero(fwd) - cur(x);
    }
    cur = std::move(next);
  }
  return cur;
}

Field convolve_direct(const Field& f, const Field& g) {
  if (!(f.domain() == g.domain())) throw std::invalid_argument("domain mismatch");
  const Domain& d = f.domain();
  Field out(d);
  auto sites = d.sites();
  for (Coord x : sites) {
    KahanSum s;
    for (Coord y : sites) {
      Coord diff{x.i - y.i, x.j - y.j};
      double fv = d.is_torus() ? f(diff) : f.value_or_zero(diff);
      if (fv != 0.0) s.add(fv * g(y));
    }
    out.at(x) = s.value();
  }
  return out;
}

Field convolve_fft(const Field& f, const Field& g) {
  if (!(f.domain() == g.domain())) throw std::invalid_argument("domain mismatch");
  if (!f.domain().is_torus())
    throw std::invalid_argument("FFT convolution requires a torus domain");
  int m = f.domain().m();
  std::size_t n2 = static_cast<std::size_t>(m) * m;
  std::vector<std::complex<double>> fa(n2), ga(n2);
  for (std::size_t k = 0; k < n2; ++k) {
    fa[k] = f.raw()[k];
    ga[k] = g.raw()[k];
  }
  dft2d(fa, m, -1);
  dft2d(ga, m, -1);
  for (std::size_t k = 0; k < n2; ++k) fa[k] *= ga[k];
  dft2d(fa, m, +1);
  Field out(f.domain());
  double scale = 1.0 / static_cast<double>(n2);
  for (std::size_t k = 0; k < n2; ++k) out.raw()[k] = fa[k].real() * scale;
  return out;
}

Field convolve(const Field& f, const Field& g) {
  if (!(f.domain() == g.domain())) throw std::invalid_argument("domain mismatch");
  if (f.domain().is_torus() && f.domain().m() >= kConvolveFftThreshold)
    return convolve_fft(f, g);
  return convolve_direct(f, g);
}

Field convolve(const Field& f, const SparseIntField& v) {
  const Domain& d = f.domain();
  Field out(d);
  for (Coord x : d.sites()) {
    KahanSum s;
    for (const auto& [y, vy] : v.entries()) {
      Coord diff{x.i - y.i, x.j - y.j};
      double fv = d.is_torus() ? f(diff) : f.value_or_zero(diff);
      s.add(fv * static_cast<double>(vy));
    }
    out.at(x) = s.value();
  }
  return out;
}

std::pair<SparseIntField, SparseIntField> c1_decomposition(const SparseIntField& v) {
  if (v.sum() != 0)
    throw std::invalid_argument("c1_decomposition: v must have total sum 0");
  const Domain d = v.domain();
  SparseIntField f(d), g(d);

  // Row pass: strip each row's total onto the column i = 0, then integrate
  // the remainder along i. f(i,j) = sum_{i' < i} r_j(i') has finite support
  // because each row of r sums to zero.
  std::map<int, std::int64_t> row_sums;
  std::map<int, std::map<int, std::int64_t>> rows;
  for (const auto& [x, val] : v.entries()) {
    rows[x.j][x.i] += val;
    row_sums[x.j] += val;
  }
  for (auto& [j, row] : rows) {
    row[0] -= row_sums[j];  // r_j = v_j - s_j * e_{(0,j)}
    if (row.empty()) continue;
    int lo = row.begin()->first, hi = row.rbegin()->first;
    std::int64_t acc = 0;
    for (int i = lo; i < hi; ++i) {
      auto it = row.find(i);
      if (it != row.end()) acc += it->second;
      if (acc != 0) f.set({i + 1, j}, acc);
    }
  }

  // Column pass: integrate the row totals along j on the column i = 0.
  if (!row_sums.empty()) {
    int lo = row_sums.begin()->first, hi = row_sums.rbegin()->first;
    std::int64_t acc = 0;
    for (int j = lo; j < hi; ++j) {
      auto it = row_sums.find(j);
      if (it != row_sums.end()) acc += it->second;
      if (acc != 0) g.set({0, j + 1}, acc);
    }
  }
  return {f, g};
}

namespace {
bool is_c2(const SparseIntField& v) {
  return v.sum() == 0 && v.moment_i() == 0 && v.moment_j() == 0;
}
}  // namespace

std::optional<std::pair<SparseIntField, SparseIntField>> c3_decomposition(
    const SparseIntField& v) {
  if (!is_c2(v)) return std::nullopt;
  auto [f, g] = c1_decomposition(v);
  // v in C^2 forces sum(f) = sum(g) = 0. The remaining obstructions are the
  // invariants mom_i(f), mom_j(g) and mom_j(f) + mom_i(g); only the last is
  // movable, through (f,g) -> (f + c*delta_2, g - c*delta_1).
  if (f.moment_i() != 0 || g.moment_j() != 0) return std::nullopt;
  std::int64_t c = f.moment_j();
  if (g.moment_i() + c != 0) return std::nullopt;
  SparseIntField d2 = delta2(v.domain()), d1 = delta1(v.domain());
  SparseIntField f2 = f;
  SparseIntField g2 = g;
  for (const auto& [x, val] : d2.entries()) f2.add(x, c * val);
  for (const auto& [x, val] : d1.entries()) g2.add(x, -c * val);
  return std::make_pair(f2, g2);
}

IntClass class_membership(const SparseIntField& v) {
  if (v.empty()) return IntClass::c3;
  if (v.sum() != 0) return IntClass::c0;
  if (v.moment_i() != 0 || v.moment_j() != 0) return IntClass::c1;
  if (c3_decomposition(v)) return IntClass::c3;
  return IntClass::c2;
}

}  // namespace sandlab

#include "sandlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "sandlab/snf.hpp"
#include "sandlab/util.hpp"

namespace sandlab {

double Frequency::harmonicity_defect() const {
  Field lap = laplacian(values);
  double worst = 0;
  for (double v : lap.raw()) worst = std::max(worst, dist_to_z(v));
  return worst;
}

std::complex<double> mu_hat(const Field& xi) {
  if (!xi.domain().is_torus())
    throw std::invalid_argument("mu_hat: torus field required");
  KahanComplexSum s;
  for (double v : xi.raw()) s.add({cos2pi(v), sin2pi(v)});
  return s.value() / static_cast<double>(xi.domain().site_count());
}

std::complex<double> mu_hat(const Frequency& xi) { return mu_hat(xi.values); }

namespace {

/// xi_bar = G_{T_m} * v, dense over the torus, for sparse v.
Field greens_convolve_torus(const SparseIntField& v, int m) {
  auto table = cached_greens_torus(m);
  Domain dom = Domain::torus(m);
  Field out(dom);
  const Field& G = table->values;
  for (const auto& [s, val] : v.entries()) {
    double w = static_cast<double>(val);
    int si = dom.mod_m(s.i), sj = dom.mod_m(s.j);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        out.at({i, j}) += w * G({i - si, j - sj});
  }
  return out;
}

/// Reduce t into (-1/2, 1/2].
double wrap_half_closed(double t) { return t - std::ceil(t - 0.5); }

}  // namespace

Frequency frequency_from_prevector(const SparseIntField& v, int m) {
  std::int64_t total = 0;
  for (const auto& [x, val] : v.entries()) total += val;
  if (total != 0)
    throw std::invalid_argument("frequency_from_prevector: v must have mean zero");
  Field xi_bar = greens_convolve_torus(v, m);
  double base = xi_bar({0, 0});
  Frequency xi(m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      xi.values.at({i, j}) = wrap_half_open(xi_bar({i, j}) - base);
  xi.values.at({0, 0}) = 0.0;
  return xi;
}

SparseIntField distinguished_prevector(const Frequency& xi) {
  int m = xi.m;
  double c = std::arg(mu_hat(xi)) / kTwoPi;
  Field lift(Domain::torus(m));
  for (Coord x : lift.domain().sites())
    lift.at(x) = c + wrap_half_closed(xi.values(x) - c);
  Field lap = laplacian(lift);
  SparseIntField v(Domain::torus(m));
  std::int64_t sum = 0;
  for (Coord x : lift.domain().sites()) {
    double val = lap(x);
    double rounded = std::round(val);
    if (std::abs(val - rounded) > 1e-6)
      throw std::invalid_argument(
          "distinguished_prevector: non-integer Laplacian; xi is not a valid frequency");
    auto iv = static_cast<std::int64_t>(rounded);
    if (iv != 0) v.set(x, iv);
    sum += iv;
  }
  if (sum != 0 || v.norm_inf() > 3)
    throw std::runtime_error("distinguished_prevector: invariant violation");
  return v;
}

SavingsReport savings(const Frequency& xi, const std::vector<Coord>& S) {
  SavingsReport rep;
  rep.set_size = S.size();
  KahanComplexSum part;
  for (Coord x : S) {
    double v = xi.values(x);
    part.add({cos2pi(v), sin2pi(v)});
  }
  rep.savings = static_cast<double>(S.size()) - std::abs(part.value());
  std::complex<double> mu = mu_hat(xi);
  rep.eigenvalue_modulus = std::abs(mu);
  double m2 = static_cast<double>(xi.values.domain().site_count());
  rep.total_savings = m2 * (1.0 - rep.eigenvalue_modulus);
  return rep;
}

std::vector<std::vector<Coord>> r_cluster(const SparseIntField& v, int R) {
  if (R < 1) throw std::invalid_argument("r_cluster: R >= 1");
  std::vector<Coord> supp = v.support();
  const Domain& dom = v.domain();
  std::vector<int> parent(supp.size());
  for (std::size_t i = 0; i < supp.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < supp.size(); ++i)
    for (std::size_t j = i + 1; j < supp.size(); ++j)
      if (dom.distance(supp[i], supp[j]) <= 2 * R) {
        int a = find(static_cast<int>(i)), b = find(static_cast<int>(j));
        if (a != b) parent[a] = b;
      }
  std::map<int, std::vector<Coord>> groups;
  for (std::size_t i = 0; i < supp.size(); ++i)
    groups[find(static_cast<int>(i))].push_back(supp[i]);
  std::vector<std::vector<Coord>> out;
  for (auto& [root, sites] : groups) out.push_back(std::move(sites));
  return out;
}

bool is_integer_laplacian_torus(const SparseIntField& u, int m) {
  if (u.empty()) return true;
  Field phi = greens_convolve_torus(u, m);
  // u = Delta w  <=>  G * u = w - mean(w): all values share one fractional
  // part. Check approximately, then exactly on the rounded candidate.
  Coord x0 = u.support().front();
  double base = phi(x0);
  SparseIntField w(Domain::torus(m));
  for (Coord x : phi.domain().sites()) {
    double t = phi(x) - base;
    double r = std::round(t);
    if (std::abs(t - r) > 1e-6) return false;
    if (r != 0) w.set(x, static_cast<std::int64_t>(r));
  }
  return laplacian(w) == u;
}

SparseIntField r_reduce(const SparseIntField& v, int R) {
  if (!v.domain().is_torus())
    throw std::invalid_argument("r_reduce: torus prevector required");
  int m = v.domain().m();
  auto clusters = r_cluster(v, R);
  SparseIntField out(v.domain());
  for (const auto& cluster : clusters) {
    SparseIntField part(v.domain());
    for (Coord x : cluster) part.set(x, v.value(x));
    bool removable = false;
    // Quick necessary test when the cluster embeds in a half-torus window:
    // an integer Laplacian restricted to Z^2 coordinates lies in C^2.
    int min_i = m, max_i = -m, min_j = m, max_j = -m;
    SparseIntField embedded(Domain::window(2 * m));
    Coord anchor = cluster.front();
    for (Coord x : cluster) {
      int di = v.domain().signed_rep(x.i - anchor.i);
      int dj = v.domain().signed_rep(x.j - anchor.j);
      min_i = std::min(min_i, di);
      max_i = std::max(max_i, di);
      min_j = std::min(min_j, dj);
      max_j = std::max(max_j, dj);
      embedded.set({di, dj}, v.value(x));
    }
    bool embeds = (max_i - min_i) < m / 2 && (max_j - min_j) < m / 2;
    if (!embeds || class_membership(embedded) >= IntClass::c2)
      removable = is_integer_laplacian_torus(part, m);
    if (!removable)
      for (Coord x : cluster) out.set(x, v.value(x));
  }
  return out;
}

// ---- Packed pattern machinery ----

SparseIntField PackedPattern::to_sparse() const {
  SparseIntField v(Domain::window(127));
  for (int t = 0; t < n; ++t) v.set({ci[t], cj[t]}, val[t]);
  return v;
}

std::int64_t PackedPattern::norm1() const {
  std::int64_t s = 0;
  for (int t = 0; t < n; ++t) s += std::abs(static_cast<int>(val[t]));
  return s;
}

int PackedPattern::diameter() const {
  int d = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      d = std::max(d, std::abs(ci[a] - ci[b]) + std::abs(cj[a] - cj[b]));
  return d;
}

namespace {

int cmp_packed(const PackedPattern& a, const PackedPattern& b) {
  return std::memcmp(&a, &b, sizeof(PackedPattern));
}

struct PackedHash {
  std::size_t operator()(const PackedPattern& p) const {
    const auto* bytes = reinterpret_cast<const unsigned char*>(&p);
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < sizeof(PackedPattern); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct PackedEq {
  bool operator()(const PackedPattern& a, const PackedPattern& b) const {
    return cmp_packed(a, b) == 0;
  }
};

void anchor_and_sort(PackedPattern& p) {
  int mi = 127, mj = 127;
  for (int t = 0; t < p.n; ++t) {
    mi = std::min(mi, static_cast<int>(p.ci[t]));
    mj = std::min(mj, static_cast<int>(p.cj[t]));
  }
  for (int t = 0; t < p.n; ++t) {
    p.ci[t] = static_cast<std::int8_t>(p.ci[t] - mi);
    p.cj[t] = static_cast<std::int8_t>(p.cj[t] - mj);
  }
  // Insertion sort by (ci, cj); entry count is tiny.
  for (int a = 1; a < p.n; ++a) {
    std::int8_t xi = p.ci[a], xj = p.cj[a], xv = p.val[a];
    int b = a - 1;
    while (b >= 0 && (p.ci[b] > xi || (p.ci[b] == xi && p.cj[b] > xj))) {
      p.ci[b + 1] = p.ci[b];
      p.cj[b + 1] = p.cj[b];
      p.val[b + 1] = p.val[b];
      --b;
    }
    p.ci[b + 1] = xi;
    p.cj[b + 1] = xj;
    p.val[b + 1] = xv;
  }
}

void dihedral_packed(const PackedPattern& p, int k, bool flip, PackedPattern& out) {
  out = PackedPattern{};
  out.n = p.n;
  for (int t = 0; t < p.n; ++t) {
    int i = p.ci[t], j = p.cj[t];
    int a, b;
    switch (k) {
      case 0: a = i; b = j; break;
      case 1: a = -i; b = j; break;
      case 2: a = i; b = -j; break;
      case 3: a = -i; b = -j; break;
      case 4: a = j; b = i; break;
      case 5: a = -j; b = i; break;
      case 6: a = j; b = -i; break;
      default: a = -j; b = -i; break;
    }
    out.ci[t] = static_cast<std::int8_t>(a);
    out.cj[t] = static_cast<std::int8_t>(b);
    out.val[t] = flip ? -p.val[t] : p.val[t];
  }
  anchor_and_sort(out);
}

/// Minimal representative under dihedral x sign x translation. Optionally
/// counts the distinct variants (the number of translate-classes).
PackedPattern canonical_packed(const PackedPattern& p, int* orbit_out = nullptr) {
  PackedPattern best{};
  PackedPattern variants[16];
  int idx = 0;
  for (int flip = 0; flip < 2; ++flip)
    for (int k = 0; k < 8; ++k) {
      dihedral_packed(p, k, flip, variants[idx]);
      if (idx == 0 || cmp_packed(variants[idx], best) < 0) best = variants[idx];
      ++idx;
    }
  if (orbit_out) {
    int distinct = 0;
    for (int a = 0; a < 16; ++a) {
      bool seen = false;
      for (int b = 0; b < a; ++b)
        if (cmp_packed(variants[a], variants[b]) == 0) {
          seen = true;
          break;
        }
      if (!seen) ++distinct;
    }
    *orbit_out = distinct;
  }
  return best;
}

std::mutex class_cache_mutex;
std::map<std::pair<int, int>, ClassEnumeration> class_cache;

ClassEnumeration build_c2_classes(int B, int R) {
  if (B > PackedPattern::kMaxEntries)
    throw std::invalid_argument("enumerate_c2_classes: B too large for packed patterns");
  Domain ball = Domain::window(R);
  std::vector<Coord> sites = ball.sites();  // lexicographic in (i, j)
  const int ns = static_cast<int>(sites.size());

  constexpr int kShards = 256;
  std::vector<std::unordered_set<PackedPattern, PackedHash, PackedEq>> shards(kShards);
  std::vector<std::mutex> shard_mutex(kShards);
  PackedHash hasher;

  for (int k = 1; 2 * k <= B; ++k) {
    // Multisets of k unit charges over the ball as non-decreasing site index
    // sequences, grouped by first moments. A positive multiset pairs with
    // every negative multiset of equal moments; p <= q suffices because the
    // global sign flip is merged by canonicalization.
    std::vector<std::vector<int>> multisets;
    std::vector<int> cur;
    std::function<void(int)> gen = [&](int start) {
      if (static_cast<int>(cur.size()) == k) {
        multisets.push_back(cur);
        return;
      }
      for (int s = start; s < ns; ++s) {
        cur.push_back(s);
        gen(s);
        cur.pop_back();
      }
    };
    gen(0);

    std::map<std::pair<int, int>, std::vector<int>> by_moment;
    std::vector<std::pair<int, int>> moments(multisets.size());
    for (std::size_t t = 0; t < multisets.size(); ++t) {
      int mi = 0, mj = 0;
      for (int s : multisets[t]) {
        mi += sites[s].i;
        mj += sites[s].j;
      }
      moments[t] = {mi, mj};
      by_moment[moments[t]].push_back(static_cast<int>(t));
    }

    parallel_for(multisets.size(), [&](std::size_t pi) {
      auto it = by_moment.find(moments[pi]);
      if (it == by_moment.end()) return;
      const std::vector<int>& pos = multisets[pi];
      for (int qi : it->second) {
        if (qi < static_cast<int>(pi)) continue;
        const std::vector<int>& neg = multisets[qi];
        // Merge the two sorted unit-charge lists into net values.
        PackedPattern pat{};
        bool overlap = false;
        std::size_t a = 0, b = 0;
        while (a < pos.size() || b < neg.size()) {
          int site;
          int value = 0;
          if (b == neg.size() || (a < pos.size() && pos[a] < neg[b])) {
            site = pos[a];
            while (a < pos.size() && pos[a] == site) {
              ++value;
              ++a;
            }
            if (b < neg.size() && neg[b] == site) {
              overlap = true;
              break;
            }
          } else if (a == pos.size() || neg[b] < pos[a]) {
            site = neg[b];
            while (b < neg.size() && neg[b] == site) {
              --value;
              ++b;
            }
          } else {
            overlap = true;
            break;
          }
          pat.ci[pat.n] = static_cast<std::int8_t>(sites[site].i);
          pat.cj[pat.n] = static_cast<std::int8_t>(sites[site].j);
          pat.val[pat.n] = static_cast<std::int8_t>(value);
          ++pat.n;
        }
        if (overlap || pat.n == 0) continue;
        PackedPattern canon = canonical_packed(pat);
        std::size_t shard = hasher(canon) % kShards;
        std::lock_guard<std::mutex> lock(shard_mutex[shard]);
        shards[shard].insert(canon);
      }
    });
  }

  ClassEnumeration out;
  for (auto& s : shards)
    for (const auto& p : s) out.patterns_.push_back(p);
  std::sort(out.patterns_.begin(), out.patterns_.end(),
            [](const PackedPattern& a, const PackedPattern& b) {
              auto na = a.norm1(), nb = b.norm1();
              if (na != nb) return na < nb;
              int da = a.diameter(), db = b.diameter();
              if (da != db) return da < db;
              return cmp_packed(a, b) < 0;
            });
  out.tclasses_.resize(out.patterns_.size());
  parallel_for(out.patterns_.size(), [&](std::size_t i) {
    int orbit = 0;
    canonical_packed(out.patterns_[i], &orbit);
    out.tclasses_[i] = static_cast<std::uint8_t>(orbit);
  });
  return out;
}

}  // namespace

PackedPattern canonical_support(const PackedPattern& p) {
  PackedPattern best{};
  PackedPattern var{};
  for (int k = 0; k < 8; ++k) {
    dihedral_packed(p, k, false, var);
    if (k == 0 || cmp_packed(var, best) < 0) best = var;
  }
  return best;
}

bool packed_equal_canonical(const PackedPattern& a, const PackedPattern& b) {
  PackedPattern ca = canonical_packed(a);
  PackedPattern cb = canonical_packed(b);
  return cmp_packed(ca, cb) == 0;
}

const ClassEnumeration& enumerate_c2_classes(int B, int R) {
  {
    std::lock_guard<std::mutex> lock(class_cache_mutex);
    auto it = class_cache.find({B, R});
    if (it != class_cache.end()) return it->second;
  }
  ClassEnumeration built = build_c2_classes(B, R);
  std::lock_guard<std::mutex> lock(class_cache_mutex);
  return class_cache.emplace(std::make_pair(B, R), std::move(built)).first->second;
}

// ---- Gap search ----

namespace {

/// Scratch for repeated window evaluations on one torus size.
struct EvalScratch {
  int m = 0;
  std::vector<int> stamp;
  int epoch = 0;
  std::vector<int> window;  // flat torus indices

  void reset(int m_) {
    if (m != m_) {
      m = m_;
      stamp.assign(static_cast<std::size_t>(m) * m, 0);
      epoch = 0;
    }
  }
};

thread_local EvalScratch tl_scratch;

/// sav(xi; W) over the union of l1 balls of radius w around the support,
/// as a set of torus sites. A rigorous lower bound for sav(xi; T_m) by
/// superadditivity of savings over disjoint sets.
double window_savings(const Field& G, int m, const PackedPattern& p, int w,
                      EvalScratch& scratch) {
  scratch.reset(m);
  ++scratch.epoch;
  scratch.window.clear();
  Domain dom = Domain::torus(m);
  for (int t = 0; t < p.n; ++t)
    for (int di = -w; di <= w; ++di) {
      int rem = w - std::abs(di);
      for (int dj = -rem; dj <= rem; ++dj) {
        int i = dom.mod_m(p.ci[t] + di);
        int j = dom.mod_m(p.cj[t] + dj);
        int idx = i * m + j;
        if (scratch.stamp[idx] != scratch.epoch) {
          scratch.stamp[idx] = scratch.epoch;
          scratch.window.push_back(idx);
        }
      }
    }
  KahanComplexSum s;
  for (int idx : scratch.window) {
    int i = idx / m, j = idx % m;
    double xi = 0;
    for (int t = 0; t < p.n; ++t)
      xi += static_cast<double>(p.val[t]) * G({i - p.ci[t], j - p.cj[t]});
    s.add({cos2pi(xi), sin2pi(xi)});
  }
  return static_cast<double>(scratch.window.size()) - std::abs(s.value());
}

double full_savings(const Field& G, int m, const PackedPattern& p) {
  KahanComplexSum s;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double xi = 0;
      for (int t = 0; t < p.n; ++t)
        xi += static_cast<double>(p.val[t]) * G({i - p.ci[t], j - p.cj[t]});
      s.add({cos2pi(xi), sin2pi(xi)});
    }
  double m2 = static_cast<double>(m) * m;
  return m2 - std::abs(s.value());
}

PackedPattern pack_sparse(const SparseIntField& v) {
  PackedPattern p{};
  for (const auto& [x, val] : v.entries()) {
    p.ci[p.n] = static_cast<std::int8_t>(x.i);
    p.cj[p.n] = static_cast<std::int8_t>(x.j);
    p.val[p.n] = static_cast<std::int8_t>(val);
    ++p.n;
  }
  anchor_and_sort(p);
  return p;
}

GapResult gap_search_exhaustive(int m) {
  // Complete for m <= 3: every frequency has a distinguished prevector with
  // |v|_inf <= 3, so scanning all such mean-zero v covers the dual group.
  auto table = cached_greens_torus(m);
  const Field& G = table->values;
  int n = m * m;
  std::vector<Coord> sites = Domain::torus(m).sites();
  std::vector<std::int64_t> vals(n, 0);
  GapResult res;
  res.gap = 2.0;
  std::set<std::vector<std::int8_t>> minimizer_keys;
  std::vector<PackedPattern> minimizers;
  std::uint64_t evaluated = 0;

  std::function<void(int, std::int64_t)> rec = [&](int pos, std::int64_t sum) {
    if (pos == n) {
      if (sum != 0) return;
      bool zero = true;
      for (auto v : vals)
        if (v) {
          zero = false;
          break;
        }
      if (zero) return;
      ++evaluated;
      KahanComplexSum s;
      for (int t = 0; t < n; ++t) {
        double xi = 0;
        for (int u = 0; u < n; ++u) {
          if (!vals[u]) continue;
          xi += static_cast<double>(vals[u]) *
                G({sites[t].i - sites[u].i, sites[t].j - sites[u].j});
        }
        s.add({cos2pi(xi), sin2pi(xi)});
      }
      double sav = static_cast<double>(n) - std::abs(s.value());
      if (sav < 1e-9) return;  // trivial frequency (v in Delta Z^{T_m})
      double gap = sav / n;
      if (gap < res.gap - 1e-12) {
        res.gap = gap;
        minimizer_keys.clear();
        minimizers.clear();
      }
      if (gap < res.gap + 1e-12) {
        PackedPattern p{};
        for (int u = 0; u < n; ++u)
          if (vals[u]) {
            p.ci[p.n] = static_cast<std::int8_t>(sites[u].i);
            p.cj[p.n] = static_cast<std::int8_t>(sites[u].j);
            p.val[p.n] = static_cast<std::int8_t>(vals[u]);
            ++p.n;
          }
        PackedPattern canon = canonical_packed(p);
        std::vector<std::int8_t> key(reinterpret_cast<std::int8_t*>(&canon),
                                     reinterpret_cast<std::int8_t*>(&canon) +
                                         sizeof(PackedPattern));
        if (minimizer_keys.insert(key).second && minimizers.size() < 64)
          minimizers.push_back(canon);
      }
      return;
    }
    std::int64_t slack = 3LL * (n - pos - 1);
    for (std::int64_t v = -3; v <= 3; ++v) {
      if (pos + 1 <= n && std::abs(sum + v) > slack) continue;
      vals[pos] = v;
      rec(pos + 1, sum + v);
    }
    vals[pos] = 0;
  };
  rec(0, 0);

  res.scaled_gap = res.gap * n;
  res.classes_total = evaluated;
  res.classes_fully_evaluated = evaluated;
  for (const auto& p : minimizers) res.minimizers.push_back(p.to_sparse());
  return res;
}

}  // namespace

GapResult gap_search(int m, int B, int R) {
  if (m <= 3) return gap_search_exhaustive(m);
  if (m <= 2 * R)
    throw std::invalid_argument("gap_search: need m > 2R for the ball to embed");
  const ClassEnumeration& classes = enumerate_c2_classes(B, R);
  auto table = cached_greens_torus(m);
  const Field& G = table->values;
  const double m2 = static_cast<double>(m) * m;
  const double margin = 1e-9;
  const double kExcluded = 2.0 * m2;  // sentinel for trivial classes
  int w_small = std::clamp((m - 2 * R - 1) / 4, 2, 3);
  int w_big = std::clamp((m - 2 * R - 1) / 2, 3, 10);

  GapResult res;
  res.classes_total = classes.size();
  res.sav_lower.assign(classes.size(), 0.0);
  res.sav_exact.assign(classes.size(), std::nan(""));

  auto exact_eval = [&](std::size_t ci) -> double {
    double sav = full_savings(G, m, classes.packed(ci));
    if (sav < 0.5) {
      SparseIntField part(Domain::torus(m));
      const PackedPattern& p = classes.packed(ci);
      for (int t = 0; t < p.n; ++t) part.set({p.ci[t], p.cj[t]}, p.val[t]);
      if (is_integer_laplacian_torus(part, m)) return -1.0;  // trivial
    }
    return sav;
  };

  // Deterministic warmup on the leading (smallest-norm) classes pins the
  // reference incumbent; all later prune decisions compare against it, so
  // the outcome is independent of thread timing.
  std::size_t warmup = std::min<std::size_t>(64, classes.size());
  double incumbent = kExcluded;
  for (std::size_t ci = 0; ci < warmup; ++ci) {
    double sav = exact_eval(ci);
    if (sav < 0) {
      res.sav_lower[ci] = kExcluded;
      continue;
    }
    res.sav_exact[ci] = sav;
    res.sav_lower[ci] = sav;
    incumbent = std::min(incumbent, sav);
  }
  const double reference = incumbent;

  std::mutex state_mutex;
  std::size_t full_evals = warmup;
  parallel_for(classes.size() - warmup, [&](std::size_t t) {
    std::size_t ci = warmup + t;
    const PackedPattern& p = classes.packed(ci);
    double sav_w = window_savings(G, m, p, w_small, tl_scratch);
    res.sav_lower[ci] = sav_w;
    if (sav_w > reference + margin) return;
    sav_w = window_savings(G, m, p, w_big, tl_scratch);
    res.sav_lower[ci] = std::max(res.sav_lower[ci], sav_w);
    if (sav_w > reference + margin) return;
    double sav = exact_eval(ci);
    std::lock_guard<std::mutex> lock(state_mutex);
    ++full_evals;
    if (sav < 0) {
      res.sav_lower[ci] = kExcluded;
      return;
    }
    res.sav_exact[ci] = sav;
    res.sav_lower[ci] = sav;
    incumbent = std::min(incumbent, sav);
  });

  res.gap = incumbent / m2;
  res.scaled_gap = incumbent;
  res.classes_fully_evaluated = full_evals;
  for (std::size_t ci = 0; ci < classes.size(); ++ci)
    if (!std::isnan(res.sav_exact[ci]) && res.sav_exact[ci] <= incumbent + margin)
      res.minimizers.push_back(classes.pattern(ci));
  return res;
}

// ---- Dual group oracle ----

DualGroup dual_group_oracle(int m) {
  if (m > 3) throw std::invalid_argument("dual_group_oracle: m <= 3");
  DualGroup dg;
  dg.m = m;
  int n = m * m - 1;
  auto [d, q] = smith_normal_form_with_q(reduced_laplacian(m));
  mpz_class order = 1;
  for (const auto& di : d) order *= di == 0 ? mpz_class(1) : di;
  dg.order = order;
  if (order > 100000)
    throw std::invalid_argument("dual_group_oracle: group too large to enumerate");

  // Characters: xi = Q (k_1/d_1, ..., k_n/d_n)^T mod 1, k_i in [0, d_i).
  std::vector<long> dl(n);
  for (int i = 0; i < n; ++i) dl[i] = d[i] == 0 ? 1 : d[i].get_si();
  std::vector<long> k(n, 0);
  Domain dom = Domain::torus(m);
  dg.exact_gap = 2.0;
  for (;;) {
    Frequency xi(m);
    for (int row = 0; row < n; ++row) {
      double acc = 0;
      for (int col = 0; col < n; ++col) {
        if (k[col] == 0) continue;
        acc += q.at(row, col).get_d() * static_cast<double>(k[col]) / dl[col];
      }
      Coord site = dom.coord(static_cast<std::size_t>(row + 1));
      xi.values.at(site) = wrap_half_open(acc);
    }
    std::complex<double> mu = mu_hat(xi);
    bool zero = std::all_of(k.begin(), k.end(), [](long t) { return t == 0; });
    if (!zero) dg.exact_gap = std::min(dg.exact_gap, 1.0 - std::abs(mu));
    dg.frequencies.push_back(std::move(xi));
    dg.eigenvalues.push_back(mu);
    int pos = n - 1;
    while (pos >= 0 && ++k[pos] == dl[pos]) k[pos--] = 0;
    if (pos < 0) break;
  }
  if (mpz_class(static_cast<unsigned long>(dg.frequencies.size())) != order)
    throw std::runtime_error("dual_group_oracle: character count mismatch");
  return dg;
}

double DualGroup::l2_distance_sq(double N) const {
  KahanSum s;
  for (std::size_t i = 1; i < eigenvalues.size(); ++i)
    s.add(std::pow(std::abs(eigenvalues[i]), 2.0 * N));
  return s.value();
}

// ---- Cutoff profile ----

CutoffProfile cutoff_profile(int m, int B, int R, std::vector<double> steps) {
  GapResult gap = gap_search(m, B, R);
  const ClassEnumeration& classes = enumerate_c2_classes(B, R);
  CutoffProfile prof;
  prof.m = m;
  prof.gap = gap.gap;
  prof.n_star = std::log(static_cast<double>(m)) / gap.gap;
  if (steps.empty()) {
    for (double c = 0.4; c <= 2.0 + 1e-9; c += 0.1)
      steps.push_back(std::floor(c * prof.n_star));
  }
  std::sort(steps.begin(), steps.end());
  const double m2 = static_cast<double>(m) * m;
  for (double N : steps) {
    prof.steps.push_back(N);
    prof.lower_bound.push_back(m2 * std::pow(1.0 - gap.gap, 2.0 * N));
    KahanSum proxy;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      double sav = std::isnan(gap.sav_exact[ci]) ? gap.sav_lower[ci]
                                                 : gap.sav_exact[ci];
      if (sav >= 2.0 * m2 - 1e-9) continue;  // trivial class
      double mu = std::max(0.0, 1.0 - sav / m2);
      proxy.add(classes.translate_classes(ci) * m2 * std::pow(mu, 2.0 * N));
    }
    prof.upper_proxy.push_back(proxy.value());
  }
  return prof;
}

SeparatedAdditivityRow separated_additivity(int m, int d) {
  Domain win = Domain::window(8);
  SparseIntField v1 = delta1(win).convolve(delta2(win));
  PackedPattern single = pack_sparse(v1);
  SparseIntField vp(Domain::window(d + 8));
  for (const auto& [x, val] : v1.entries()) {
    vp.add(x, val);
    vp.add({x.i + d, x.j}, -val);
  }
  PackedPattern pair = pack_sparse(vp);
  auto table = cached_greens_torus(m);
  const Field& G = table->values;
  SeparatedAdditivityRow row;
  row.d = d;
  double m2 = static_cast<double>(m) * m;
  row.gap_single = full_savings(G, m, single) / m2;
  row.gap_pair = full_savings(G, m, pair) / m2;
  row.err = row.gap_pair - 2.0 * row.gap_single;
  row.fitted_c = row.err * d * d * m2 / std::log1p(d);
  return row;
}

}  // namespace sandlab

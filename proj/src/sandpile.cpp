#include "sandlab/sandpile.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

#include "sandlab/snf.hpp"

namespace sandlab {

Sandpile::Sandpile(int m, std::int64_t fill)
    : m_(m), dom_(Domain::torus(m)), h_(dom_.storage_size(), fill) {
  if (m < 2) throw std::invalid_argument("Sandpile: m >= 2");
  if (fill < 0) throw std::invalid_argument("Sandpile: heights are nonnegative");
  h_[dom_.index({0, 0})] = 0;
}

void Sandpile::set(Coord x, std::int64_t v) {
  if (is_sink(x)) return;
  if (v < 0) throw std::invalid_argument("Sandpile: heights are nonnegative");
  h_[idx(x)] = v;
}

void Sandpile::add_grain(Coord x) {
  if (is_sink(x)) return;
  ++h_[idx(x)];
}

bool Sandpile::stable() const {
  for (std::int64_t v : h_)
    if (v > 3) return false;
  return true;
}

std::int64_t Sandpile::total() const {
  std::int64_t t = 0;
  for (std::int64_t v : h_) t += v;
  return t;
}

std::int64_t Odometer::at(Coord x) const {
  Domain d = Domain::torus(m);
  return u[d.index(x)];
}

StabilizeResult stabilize(const Sandpile& sigma, TopplePolicy policy) {
  const int m = sigma.m();
  const Domain dom = sigma.domain();
  StabilizeResult res{sigma, Odometer{m, std::vector<std::int64_t>(sigma.sites(), 0)},
                      0, 0};
  std::vector<std::int64_t>& h = res.state.raw();
  std::vector<std::int64_t>& u = res.odometer.u;
  const std::size_t sink = dom.index({0, 0});

  std::deque<std::size_t> work;
  std::vector<char> queued(sigma.sites(), 0);
  for (std::size_t k = 0; k < h.size(); ++k)
    if (h[k] >= 4 && k != sink) {
      work.push_back(k);
      queued[k] = 1;
    }

  while (!work.empty()) {
    std::size_t k;
    if (policy == TopplePolicy::fifo) {
      k = work.front();
      work.pop_front();
    } else {
      k = work.back();
      work.pop_back();
    }
    queued[k] = 0;
    if (h[k] < 4) continue;
    std::int64_t times = h[k] / 4;  // bulk toppling
    h[k] -= 4 * times;
    u[k] += times;
    res.topplings += times;
    Coord x = dom.coord(k);
    for (Coord nb : neighbors(x)) {
      std::size_t kn = dom.index(nb);
      if (kn == sink) {
        res.grains_to_sink += times;
        continue;
      }
      h[kn] += times;
      if (h[kn] >= 4 && !queued[kn]) {
        work.push_back(kn);
        queued[kn] = 1;
      }
    }
  }
  return res;
}

Sandpile markov_step_at(const Sandpile& sigma, Coord site) {
  if (sigma.is_sink(site)) return sigma;
  Sandpile next = sigma;
  next.add_grain(site);
  return stabilize(next).state;
}

Sandpile markov_step(const Sandpile& sigma, Rng& rng) {
  int m = sigma.m();
  std::uint64_t pick = rng.uniform(static_cast<std::uint64_t>(m) * m);
  Coord site{static_cast<int>(pick / m), static_cast<int>(pick % m)};
  return markov_step_at(sigma, site);
}

bool is_recurrent(const Sandpile& sigma) {
  if (!sigma.stable()) throw std::invalid_argument("is_recurrent: stable input required");
  const Domain dom = sigma.domain();
  const std::size_t n = sigma.sites();
  const std::size_t sink = dom.index({0, 0});
  // Queue-based burning: x burns once h(x) >= number of edges to unburnt
  // sites. Edge multiplicities matter at m = 2.
  std::vector<int> unburnt_edges(n, 4);
  std::vector<char> burnt(n, 0);
  std::vector<std::size_t> queue;
  queue.reserve(n);
  burnt[sink] = 1;
  queue.push_back(sink);
  std::size_t burned = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    Coord x = dom.coord(queue[head]);
    for (Coord nb : neighbors(x)) {
      std::size_t kn = dom.index(nb);
      if (burnt[kn]) continue;
      if (--unburnt_edges[kn]; sigma.raw()[kn] >= unburnt_edges[kn]) {
        burnt[kn] = 1;
        ++burned;
        queue.push_back(kn);
      }
    }
  }
  return burned == n;
}

Sandpile max_stable(int m) { return Sandpile(m, 3); }

Sandpile group_add(const Sandpile& a, const Sandpile& b) {
  if (a.m() != b.m()) throw std::invalid_argument("group_add: size mismatch");
  if (!is_recurrent(a) || !is_recurrent(b))
    throw std::invalid_argument("group_add: recurrent inputs required");
  Sandpile sum = a;
  for (std::size_t k = 0; k < sum.raw().size(); ++k) sum.raw()[k] += b.raw()[k];
  sum.raw()[a.domain().index({0, 0})] = 0;
  return stabilize(sum).state;
}

Sandpile group_multiple(const Sandpile& g, const mpz_class& n) {
  if (n <= 0) throw std::invalid_argument("group_multiple: n >= 1");
  std::string bits = n.get_str(2);
  Sandpile acc = g;
  for (std::size_t i = 1; i < bits.size(); ++i) {
    acc = group_add(acc, acc);
    if (bits[i] == '1') acc = group_add(acc, g);
  }
  return acc;
}

Sandpile group_identity(int m) {
  // stab(2*max - stab(2*max)) is the usual fast recipe; verify and fall back
  // to |G_m| * max if it ever fails.
  Sandpile two_max(m, 6);
  Sandpile s = stabilize(two_max).state;
  Sandpile diff(m, 0);
  for (std::size_t k = 0; k < diff.raw().size(); ++k)
    diff.raw()[k] = two_max.raw()[k] - s.raw()[k];
  Sandpile e = stabilize(diff).state;
  if (is_recurrent(e) && group_add(e, e) == e) return e;
  GroupStructure gs = group_structure(m, false);
  return group_multiple(max_stable(m), gs.order);
}

IntMatrix reduced_laplacian(int m) {
  Domain dom = Domain::torus(m);
  int n = m * m - 1;
  IntMatrix L(n);
  // Site k (torus index) maps to row k-1 (sink is index 0).
  for (int k = 1; k < m * m + 0; ++k) {
    Coord x = dom.coord(static_cast<std::size_t>(k));
    L.at(k - 1, k - 1) = 4;
    for (Coord nb : neighbors(x)) {
      std::size_t kn = dom.index(nb);
      if (kn == 0) continue;  // sink column removed
      L.at(k - 1, static_cast<int>(kn) - 1) -= 1;
    }
  }
  return L;
}

GroupStructure group_structure(int m, bool with_snf) {
  if (m < 2 || m > 24)
    throw std::invalid_argument("group_structure: 2 <= m <= 24");
  GroupStructure gs;
  IntMatrix L = reduced_laplacian(m);
  gs.order = abs(bareiss_determinant(L));
  if (with_snf) {
    gs.invariant_factors = smith_normal_form(reduced_laplacian(m));
    mpz_class prod = 1;
    for (const auto& d : gs.invariant_factors) prod *= d;
    if (prod != gs.order)
      throw std::runtime_error("group_structure: SNF/determinant disagree");
  }
  return gs;
}

HittingTrial hitting_time_trial(int m, const Sandpile& start, Rng& rng,
                                double cap_factor) {
  HittingTrial trial;
  trial.cap = static_cast<std::int64_t>(
      std::ceil(cap_factor * m * m * std::sqrt(std::log(static_cast<double>(m)))));
  Sandpile cur = stabilize(start).state;
  if (is_recurrent(cur)) return trial;

  // Check recurrence on a stride; on the first positive check, replay from
  // the last clean snapshot one step at a time. Exact because the recurrent
  // class is closed under the chain.
  const std::int64_t stride = std::max(1, m / 4);
  Sandpile snap = cur;
  Rng snap_rng = rng;
  std::int64_t done = 0;
  while (done < trial.cap) {
    std::int64_t burst = std::min<std::int64_t>(stride, trial.cap - done);
    for (std::int64_t s = 0; s < burst; ++s) cur = markov_step(cur, rng);
    done += burst;
    if (is_recurrent(cur)) {
      Sandpile replay = snap;
      Rng replay_rng = snap_rng;
      for (std::int64_t s = 1; s <= burst; ++s) {
        replay = markov_step(replay, replay_rng);
        if (is_recurrent(replay)) {
          trial.steps = done - burst + s;
          return trial;
        }
      }
      throw std::runtime_error("hitting_time_trial: replay lost the hit");
    }
    snap = cur;
    snap_rng = rng;
  }
  trial.steps = trial.cap;
  trial.capped = true;
  return trial;
}

ParallelToppleResult parallel_topple(const WindowPile& sigma, std::int64_t n) {
  const Domain dom = sigma.domain;
  if (dom.is_torus())
    throw std::invalid_argument("parallel_topple: window domain required");
  ParallelToppleResult res{sigma, std::vector<std::int64_t>(dom.storage_size(), 0),
                           0, false, 0};
  auto sites = dom.sites();
  std::vector<std::size_t> unstable;
  for (std::int64_t step = 0; step < n; ++step) {
    unstable.clear();
    for (Coord x : sites) {
      std::size_t k = dom.index(x);
      if (res.state.h[k] >= 4) unstable.push_back(k);
    }
    if (unstable.empty()) {
      res.stable = true;
      return res;
    }
    for (std::size_t k : unstable) {
      res.state.h[k] -= 4;
      res.odometer[k] += 1;
      Coord x = dom.coord(k);
      for (Coord nb : neighbors(x)) {
        if (dom.contains(nb))
          res.state.h[dom.index(nb)] += 1;
        else
          res.grains_lost += 1;
      }
    }
    res.steps_run += 1;
  }
  res.stable = res.state.h.empty() ? true : [&] {
    for (Coord x : sites)
      if (res.state.h[dom.index(x)] >= 4) return false;
    return true;
  }();
  return res;
}

}  // namespace sandlab

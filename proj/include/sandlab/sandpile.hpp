#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <utility>
#include <vector>

#include "sandlab/domain.hpp"
#include "sandlab/rng.hpp"
#include "sandlab/snf.hpp"
#include "sandlab/sparse_int.hpp"

namespace sandlab {

/// Sandpile on the torus T_m with sink fixed at (0,0). Heights live on the
/// non-sink sites; the sink slot is kept at zero. Single-writer: clone before
/// handing to another worker.
class Sandpile {
 public:
  explicit Sandpile(int m, std::int64_t fill = 0);

  int m() const { return m_; }
  std::size_t sites() const { return h_.size(); }

  std::int64_t at(Coord x) const { return h_[idx(x)]; }
  void set(Coord x, std::int64_t v);
  void add_grain(Coord x);

  bool is_sink(Coord x) const { return dom_.mod_m(x.i) == 0 && dom_.mod_m(x.j) == 0; }
  bool stable() const;
  std::int64_t total() const;

  const std::vector<std::int64_t>& raw() const { return h_; }
  std::vector<std::int64_t>& raw() { return h_; }
  const Domain& domain() const { return dom_; }

  friend bool operator==(const Sandpile&, const Sandpile&) = default;

 private:
  std::size_t idx(Coord x) const { return dom_.index(x); }
  int m_;
  Domain dom_;
  std::vector<std::int64_t> h_;
};

/// Per-site toppling counts; sigma_final = sigma_initial - Delta(odometer)
/// exactly, in integers.
struct Odometer {
  int m = 0;
  std::vector<std::int64_t> u;
  std::int64_t at(Coord x) const;
};

struct StabilizeResult {
  Sandpile state;
  Odometer odometer;
  std::int64_t topplings = 0;
  std::int64_t grains_to_sink = 0;
};

enum class TopplePolicy { fifo, lifo };

/// Exhaustive toppling to a stable state. FIFO work queue with per-site bulk
/// toppling (floor(h/4) at once); the abelian property makes the result
/// policy-independent, which tests check against the LIFO policy.
StabilizeResult stabilize(const Sandpile& sigma,
                          TopplePolicy policy = TopplePolicy::fifo);

/// One chain step: drop a grain on a uniformly random site (sink included;
/// hitting the sink leaves sigma unchanged) and stabilize.
Sandpile markov_step(const Sandpile& sigma, Rng& rng);

/// Step with the site forced, for oracle tests.
Sandpile markov_step_at(const Sandpile& sigma, Coord site);

/// Dhar burning test (multigraph-aware, so m = 2 double edges are handled).
bool is_recurrent(const Sandpile& sigma);

Sandpile max_stable(int m);  // sigma == 3 everywhere off the sink

/// Group operation on recurrent states: pointwise add, then stabilize.
/// Throws if an argument is not recurrent.
Sandpile group_add(const Sandpile& a, const Sandpile& b);

/// n-fold group multiple by binary double-and-add (no identity needed).
Sandpile group_multiple(const Sandpile& g, const mpz_class& n);

/// Identity of the sandpile group: stab(2*max - stab(2*max)), verified
/// idempotent, with |G_m| * sigma_max as fallback.
Sandpile group_identity(int m);

struct GroupStructure {
  mpz_class order;                         // |det reduced Laplacian|
  std::vector<mpz_class> invariant_factors;  // empty unless SNF was requested
};

/// Reduced Laplacian of T_m (sink row/column removed).
IntMatrix reduced_laplacian(int m);

/// Group order via Bareiss; invariant factors via exact Smith normal form
/// when with_snf is set (dense big-integer elimination, m <= 24).
GroupStructure group_structure(int m, bool with_snf = false);

struct HittingTrial {
  std::int64_t steps = 0;
  bool capped = false;
  std::int64_t cap = 0;
};

/// Number of markov_step calls until is_recurrent first holds, capped at
/// cap_factor * m^2 * sqrt(log m). Recurrence checks run on a stride with
/// snapshot replay, which is exact because the recurrent class is closed
/// under the chain.
HittingTrial hitting_time_trial(int m, const Sandpile& start, Rng& rng,
                                double cap_factor = 100.0);

// ---- Parallel toppling on Z^2 windows (zero-extension boundary) ----

struct WindowPile {
  Domain domain;
  std::vector<std::int64_t> h;  // dense over the bounding box

  explicit WindowPile(Domain d)
      : domain(d), h(d.storage_size(), 0) {}
  std::int64_t at(Coord x) const { return h[domain.index(x)]; }
  void set(Coord x, std::int64_t v) { h[domain.index(x)] = v; }
};

struct ParallelToppleResult {
  WindowPile state;
  std::vector<std::int64_t> odometer;  // u^n, dense over the bounding box
  std::int64_t steps_run = 0;
  bool stable = false;
  std::int64_t grains_lost = 0;  // over the window boundary
};

/// n rounds of simultaneous toppling of every site with height >= 4 (or
/// fewer if the pile stabilizes first). Grains crossing the window boundary
/// are lost. sigma^n = sigma - Delta(u^n) holds exactly and |u^n|_inf <= n.
ParallelToppleResult parallel_topple(const WindowPile& sigma, std::int64_t n);

}  // namespace sandlab

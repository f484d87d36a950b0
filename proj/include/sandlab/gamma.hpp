#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sandlab/greens.hpp"
#include "sandlab/sparse_int.hpp"

namespace sandlab {

// ---- The f functional ----

struct FValue {
  double value = 0;        // window sum + 2 pi^2 |xi|_2^2
  double tail_bound = 0;   // quartic bound on the neglected tail
  double norm2 = 0;        // |G_{Z^2} * v|_2^2, spectral Parseval value
  int window_radius = 0;
};

/// f(G_{Z^2} * v) = sum over Z^2 of (1 - cos(2 pi xi_x)) for v in C^2,
/// evaluated as sum_{|x|_1 <= M} (1 - c(xi) - 2 pi^2 xi^2) + 2 pi^2 |xi|_2^2
/// with the l2 norm from Parseval on large tori. The tail bound is the
/// quartic estimate (2 pi^4 / 3) sum_{outside} xi^4, estimated from the
/// residual l2 mass and the boundary-shell maximum.
FValue f_functional(const SparseIntField& v, int window_radius = 40);

// ---- Constrained programs P, P', Q ----

struct ProgramSpec {
  enum class Kind { P, Pprime, Q };
  Kind kind = Kind::P;
  std::vector<Coord> sites;          // S
  std::vector<std::int64_t> targets; // v on S
  /// Branches proved to stay at or above this value may be skipped; the
  /// result then certifies only min >= threshold. No threshold = exact min.
  std::optional<double> prune_threshold;
};

struct NLPResult {
  bool feasible = true;
  double minimum = 0;
  bool below_threshold = false;   // min < prune_threshold (when set)
  /// True when the reported minimum is certainly global: every configuration
  /// with three or more variables above 1/4 costs more than 3.
  bool global_certified = false;
  std::vector<Coord> enlargement;    // N(S), the variable sites
  std::vector<double> minimizer;     // on N(S)
  double kkt_residual = 0;
  std::vector<int> boundary_cells;   // variable indices at box bounds
  std::size_t convex_solves = 0;
};

/// Global minimum of P(S, v), P'(S, v) or Q(S, v). P' is a single projected
/// Newton solve on the convex box [0, 1/4]^N under an augmented Lagrangian.
/// P and Q enumerate which variables may exceed 1/4 in absolute value (at
/// most two below the 2.869 scale), discretize those on a grid with local
/// refinement to 1e-3, and solve the convex remainder.
NLPResult solve_program(const ProgramSpec& spec);

struct ProgramPropertiesReport {
  double additivity_defect = 0;    // |P(S u T) - P(S) - P(T)|, d(S,T) >= 3
  double monotonicity_defect = 0;  // max(0, P(S) - P(T)) for S subset T
  double uniqueness_defect = 0;    // distance of two P' solves' minimizers
  bool ok = false;
};

/// Checks the three structural properties on the supplied instance pair.
ProgramPropertiesReport program_properties_check(const std::vector<Coord>& S,
                                                 const std::vector<Coord>& T,
                                                 std::int64_t target);

// ---- Support enumeration and the gamma pipeline ----

struct SupportInfo {
  std::vector<Coord> sites;  // canonical form
  double p_value = 0;        // P(S, 1)
};

/// Connected supports S (connected means N(S) connected) with P(S, 1) below
/// the threshold, up to translation and dihedral symmetry, grown by BFS from
/// the singleton and pruned by monotonicity.
std::vector<SupportInfo> enumerate_supports(double threshold = 2.869);

struct AuditEntry {
  std::string step;
  std::string detail;
  double value = 0;
};

struct GammaResult {
  bool ok = false;
  std::string failed_guard;  // empty when ok

  double gamma = 0;
  double c0 = 0;
  double xi_star_norm2 = 0;   // must be 1/(2 pi) to 1e-9
  double f_xi_star = 0;
  double f_tail_bound = 0;

  double p_singleton3 = 0;            // P({0}, |v|=3)
  std::vector<double> q_edge_values;  // Q({0,e1}, v00=2, v10=-2..2)
  std::vector<int> q_edge_below;      // v10 values that fall below threshold
  int plus_combos_below = 0;          // count of Q plus-programs below (want 0)

  std::size_t survivor_count = 0;
  int max_survivor_size = 0;
  std::vector<SupportInfo> survivors;

  SparseIntField minimizer{Domain::window(8)};
  double uniqueness_margin = 0;  // second-best f minus gamma

  std::vector<AuditEntry> audit;
};

/// The five-step pipeline: evaluate f(xi*); rule out |v| = 3 by P and
/// |v| = 2 by Q; enumerate supports; evaluate f on survivor configurations.
/// Any failed numerical guard aborts with the step recorded.
GammaResult compute_gamma(double threshold = 2.869);

}  // namespace sandlab

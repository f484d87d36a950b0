#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "sandlab/field.hpp"
#include "sandlab/greens.hpp"
#include "sandlab/sandpile.hpp"
#include "sandlab/sparse_int.hpp"

namespace sandlab {

/// An element of the dual group: xi : T_m -> [-1/2, 1/2) with xi(0,0) = 0
/// and Delta xi = 0 mod 1.
struct Frequency {
  int m = 0;
  Field values;
  explicit Frequency(int m_) : m(m_), values(Domain::torus(m_)) {}

  /// Largest |Delta xi| distance to the integers, for validity checks.
  double harmonicity_defect() const;
};

/// Eigenvalue of the sandpile chain at xi: mean over the torus of e(xi_x).
/// Defined for any real-valued field ("abusing notation slightly").
std::complex<double> mu_hat(const Field& xi);
std::complex<double> mu_hat(const Frequency& xi);

/// xi = (G_{T_m} * v - (G_{T_m} * v)(0,0)) mod 1 for mean-zero integer v.
Frequency frequency_from_prevector(const SparseIntField& v, int m);

/// v = Delta xi' for the lift xi' centered at C(xi) = arg(mu_hat)/2pi.
/// Mean zero, |v|_inf <= 3; throws if rounding residuals exceed 1e-6.
SparseIntField distinguished_prevector(const Frequency& xi);

struct SavingsReport {
  double savings = 0;         // sav(xi; S)
  double total_savings = 0;   // sav(xi; T_m)
  double eigenvalue_modulus = 0;
  std::size_t set_size = 0;
};

/// sav(xi; S) = |S| - |sum_{x in S} e(xi_x)|, compensated summation.
SavingsReport savings(const Frequency& xi, const std::vector<Coord>& S);

/// Partition of supp(v) by the transitive closure of l1 distance <= 2R.
std::vector<std::vector<Coord>> r_cluster(const SparseIntField& v, int R);

/// Drops every cluster C with v|_C = Delta w for integer w (decided by the
/// mod-1 constancy of G_{T_m} * v|_C plus an exact integer verification).
/// Norms never increase and the frequency is preserved.
SparseIntField r_reduce(const SparseIntField& v, int R);

/// True iff u = Delta w for some integer w on the torus.
bool is_integer_laplacian_torus(const SparseIntField& u, int m);

// ---- Candidate enumeration and gap search ----

/// Compact integer pattern, anchored at its bounding-box corner. Entries are
/// sorted lexicographically by coordinate; unused slots stay zero so the
/// byte image is a valid hash key.
struct PackedPattern {
  static constexpr int kMaxEntries = 16;
  std::uint8_t n = 0;
  std::int8_t ci[kMaxEntries] = {};
  std::int8_t cj[kMaxEntries] = {};
  std::int8_t val[kMaxEntries] = {};

  SparseIntField to_sparse() const;
  std::int64_t norm1() const;
  int diameter() const;
};

/// Canonical classes of nonzero C^2 patterns supported in the l1 ball of
/// radius R with ||v||_1 <= B, up to translation, the dihedral group and
/// global sign. Deterministically ordered by (||v||_1, diameter, bytes).
class ClassEnumeration {
 public:
  std::size_t size() const { return patterns_.size(); }
  const PackedPattern& packed(std::size_t i) const { return patterns_[i]; }
  SparseIntField pattern(std::size_t i) const { return patterns_[i].to_sparse(); }
  /// Number of distinct translate-classes the canonical class expands to
  /// (its orbit under dihedral x sign modulo translation).
  int translate_classes(std::size_t i) const { return tclasses_[i]; }

  std::vector<PackedPattern> patterns_;
  std::vector<std::uint8_t> tclasses_;
};

const ClassEnumeration& enumerate_c2_classes(int B, int R);

/// Canonical form under translation and the dihedral group (values kept).
PackedPattern canonical_support(const PackedPattern& p);

/// True when two patterns lie in one class under translation, the dihedral
/// group and global sign.
bool packed_equal_canonical(const PackedPattern& a, const PackedPattern& b);

struct GapResult {
  double gap = 0;          // min over nonzero classes of 1 - |mu_hat|
  double scaled_gap = 0;   // m^2 * gap
  std::vector<SparseIntField> minimizers;
  std::size_t classes_total = 0;
  std::size_t classes_fully_evaluated = 0;
  // Per enumerated class: a rigorous lower bound on sav (from a window by
  // superadditivity), and the exact value where fully evaluated. Trivial
  // classes (v in Delta Z^{T_m}) are marked with sav_lower = infinity.
  std::vector<double> sav_lower;
  std::vector<double> sav_exact;  // NaN where not evaluated
};

/// Spectral gap by enumeration: for m <= 3 an exhaustive scan over all
/// prevectors with |v|_inf <= 3 (complete, since every frequency has such a
/// distinguished prevector); otherwise the canonical C^2 enumeration with a
/// rigorous near-support savings lower bound used for pruning.
GapResult gap_search(int m, int B = 8, int R = 4);

// ---- Exact dual group (small m) ----

struct DualGroup {
  int m = 0;
  mpz_class order;
  std::vector<Frequency> frequencies;             // all characters; [0] = 0
  std::vector<std::complex<double>> eigenvalues;  // matching order
  double exact_gap = 0;                           // min over nonzero of 1-|mu|

  /// Exact L^2 distance sum_{xi != 0} |mu_hat(xi)|^{2N}.
  double l2_distance_sq(double N) const;
};

/// Full character table of the sandpile group via the Smith normal form of
/// the reduced Laplacian. Group order must be enumerable (m <= 3).
DualGroup dual_group_oracle(int m);

// ---- Cutoff profile ----

struct CutoffProfile {
  int m = 0;
  double gap = 0;
  double n_star = 0;  // log(m) / gap
  std::vector<double> steps;        // N values
  std::vector<double> lower_bound;  // m^2 (1-gap)^{2N}
  std::vector<double> upper_proxy;  // heuristic bound: class sums
};

/// Lower bound and heuristic upper proxy for the L^2 mixing distance at the
/// given step counts (empty list = automatic grid around n_star). The proxy
/// sums m^2 * (translate classes) * |mu|^{2N} over the enumerated classes
/// and is for visualization and regression, not a proved bound.
CutoffProfile cutoff_profile(int m, int B, int R, std::vector<double> steps);

struct SeparatedAdditivityRow {
  int d = 0;               // l1 separation of the two translates
  double gap_single = 0;   // 1 - |mu| for one copy
  double gap_pair = 0;     // 1 - |mu| for the difference frequency
  double err = 0;          // gap_pair - 2 * gap_single
  double fitted_c = 0;     // err * d^2 * m^2 / log(1+d)
};

/// Additivity error for two delta1*delta2 translates at separation d.
SeparatedAdditivityRow separated_additivity(int m, int d);

}  // namespace sandlab

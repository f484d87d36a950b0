#include "sandlab/sparse_int.hpp"

namespace sandlab {

SparseIntField basis_vector(Domain d, Coord x) {
  SparseIntField f(d);
  f.set(x, 1);
  return f;
}

SparseIntField delta1(Domain d) {
  SparseIntField f(d);
  f.set({0, 0}, -1);
  f.set({-1, 0}, 1);
  return f;
}

SparseIntField delta2(Domain d) {
  SparseIntField f(d);
  f.set({0, 0}, -1);
  f.set({0, -1}, 1);
  return f;
}

SparseIntField laplacian(const SparseIntField& w) {
  SparseIntField out(w.domain());
  for (const auto& [x, v] : w.entries()) {
    out.add(x, 4 * v);
    for (Coord n : neighbors(x)) out.add(n, -v);
  }
  return out;
}

}  // namespace sandlab

#include "sandlab/field.hpp"

#include <stdexcept>

namespace sandlab {

Field Field::translated(Coord a) const {
  if (!domain_.is_torus())
    throw std::invalid_argument("translation is defined on torus fields only");
  Field out(domain_);
  int m = domain_.m();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      out.at({i, j}) = (*this)({i - a.i, j - a.j});
  return out;
}

Field Field::operator+(const Field& o) const {
  if (!(domain_ == o.domain_)) throw std::invalid_argument("domain mismatch");
  Field out(domain_);
  for (std::size_t k = 0; k < values_.size(); ++k)
    out.values_[k] = values_[k] + o.values_[k];
  return out;
}

Field Field::operator-(const Field& o) const {
  if (!(domain_ == o.domain_)) throw std::invalid_argument("domain mismatch");
  Field out(domain_);
  for (std::size_t k = 0; k < values_.size(); ++k)
    out.values_[k] = values_[k] - o.values_[k];
  return out;
}

Field Field::scaled(double c) const {
  Field out(domain_);
  for (std::size_t k = 0; k < values_.size(); ++k) out.values_[k] = c * values_[k];
  return out;
}

}  // namespace sandlab

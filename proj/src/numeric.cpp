#include "agsd/numeric.hpp"

#include <boost/math/distributions/normal.hpp>

#include "agsd/errors.hpp"

namespace agsd {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
  static const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, p);
}

}  // namespace agsd

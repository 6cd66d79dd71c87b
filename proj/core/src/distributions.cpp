#include "fieldcast/distributions.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace fieldcast {

double gaussian_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double gaussian_pdf(double z) {
  return std::exp(-0.5 * z * z) * (0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
}

double gaussian_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::domain_error("gaussian_quantile: p must lie in (0, 1)");
  }
  // erfc_inv is accurate on the lower tail; reflect the upper half.
  if (p < 0.5) return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
  return std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * (1.0 - p));
}

}  // namespace fieldcast

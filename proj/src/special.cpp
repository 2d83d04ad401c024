#include "amod/special.hpp"

#include <cmath>

#include "amod/errors.hpp"

namespace amod {

double digamma(double x) {
  require(x > 0.0 && std::isfinite(x), "digamma requires finite x > 0");
  // Shift into the asymptotic regime, then use the Bernoulli-number series.
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n)
  double series = inv2 * (1.0 / 12.0 -
                  inv2 * (1.0 / 120.0 -
                  inv2 * (1.0 / 252.0 -
                  inv2 * (1.0 / 240.0 -
                  inv2 * (1.0 / 132.0)))));
  result += std::log(x) - 0.5 * inv - series;
  return result;
}

}  // namespace amod

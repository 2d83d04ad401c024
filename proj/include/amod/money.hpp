#pragma once

#include <cmath>
#include <cstdint>

namespace amod {

// Currency is held as integer cents inside the solvers and the environment
// so that objective comparisons and the reward decomposition are exact.
using Money = std::int64_t;

inline Money to_cents(double currency) {
  return static_cast<Money>(std::llround(currency * 100.0));
}

inline double to_currency(Money cents) { return static_cast<double>(cents) / 100.0; }

}  // namespace amod

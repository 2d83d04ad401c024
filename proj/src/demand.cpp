#include "amod/demand.hpp"

#include <algorithm>

namespace amod {

DemandMatrix sample_demand(const Scenario& scenario, int t, Rng& rng) {
  require(t >= 0 && t < scenario.demand_rate.dim0(), "sample_demand: t out of range");
  const int n = scenario.n_stations;
  DemandMatrix d;
  d.t = t;
  d.counts = Grid2<long>(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double rate = scenario.demand_rate(t, i, j);
      d.counts(i, j) = rate > 0.0 ? rng.poisson(rate) : 0;
    }
  return d;
}

DemandForecast forecast_demand(const Scenario& scenario, int t, Rng& rng,
                               double noise_sigma) {
  const int k = scenario.plan_horizon;
  require(t >= 0 && t + k < scenario.demand_rate.dim0(),
          "forecast_demand: window exceeds rate tensor");
  const int n = scenario.n_stations;
  DemandForecast f;
  f.t = t;
  f.noise_sigma = noise_sigma;
  f.rates = Grid3<double>(k + 1, n, n);
  for (int h = 0; h <= k; ++h)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double rate = scenario.demand_rate(t + h, i, j);
        if (rate <= 0.0 || noise_sigma <= 0.0) {
          f.rates(h, i, j) = std::max(rate, 0.0);
        } else {
          f.rates(h, i, j) = std::max(0.0, rate * (1.0 + noise_sigma * rng.normal()));
        }
      }
  return f;
}

}  // namespace amod

#pragma once

#include "amod/grid.hpp"
#include "amod/rng.hpp"
#include "amod/scenario.hpp"

namespace amod {

// Realized trip requests for one time step.
struct DemandMatrix {
  Grid2<long> counts;  // d^t_ij, non-negative integers
  int t = 0;
};

// Noisy unbiased rate estimate covering steps t .. t + K.
struct DemandForecast {
  Grid3<double> rates;  // (K+1) x N x N
  int t = 0;
  double noise_sigma = 0.0;
};

// Independent Poisson draw per OD pair from the step-t rate slice.
DemandMatrix sample_demand(const Scenario& scenario, int t, Rng& rng);

// Per-entry multiplicative Gaussian noise, truncated at zero:
// max(0, rate * (1 + eps)), eps ~ N(0, sigma^2). sigma = 0 returns the
// rate slices exactly; zero rates stay exactly zero.
DemandForecast forecast_demand(const Scenario& scenario, int t, Rng& rng,
                               double noise_sigma);

}  // namespace amod

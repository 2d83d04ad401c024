#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "amod/demand.hpp"
#include "amod/flow.hpp"
#include "amod/scenario.hpp"

namespace amod {

// Fleet bookkeeping. in_transit is keyed by (arrival_step, destination) so
// iteration order is deterministic; every key satisfies arrival_step > t.
struct FleetState {
  std::vector<long> idle;                          // m^t_i
  std::map<std::pair<int, int>, long> in_transit;  // (arrival, dest) -> count
  int t = 0;

  long total() const {
    long sum = 0;
    for (long m : idle) sum += m;
    for (const auto& [key, v] : in_transit) sum += v;
    return sum;
  }
};

// Policy-facing view of the state: per-node features plus the normalized
// adjacency. Feature layout (F = 2K + 2 columns):
//   [0]        current idle / fleet_size
//   [1..K]     projected idle at t+1..t+K (idle + scheduled arrivals) / fleet_size
//   [K+1..2K+1] origin profit potential sum_j d_hat(p - c) for t..t+K,
//              scaled by the max magnitude over all nodes and horizon slots.
struct Observation {
  Grid2<double> node_features;  // N x F
  Grid2<double> adjacency;      // N x N, symmetric, rows sum to 1
  int t = 0;
};

struct StepInfo {
  Money passenger_profit = 0;  // cents
  Money rebalancing_cost = 0;  // cents
  long served_demand = 0;
  long unserved_demand = 0;
  Money lost_profit = 0;  // cents of unserved positive-margin demand
};

struct StepResult {
  Observation next_obs;
  double reward = 0.0;     // currency units
  Money reward_cents = 0;  // exact: passenger_profit - rebalancing_cost
  bool done = false;
  StepInfo info;
};

Observation build_observation(const FleetState& state, const Scenario& scenario,
                              const DemandForecast& forecast);

// The rebalancing MDP. One instance is single-threaded and stateful. The
// whole episode's demand is drawn up front from per-step substreams of the
// reset seed, so trajectories are reproducible and controllers with foresight
// can read future realizations.
class AmodEnv {
 public:
  explicit AmodEnv(Scenario scenario, double obs_noise_sigma = 0.0);

  Observation reset(std::uint64_t seed);
  StepResult step(const std::vector<double>& action);
  // Apply explicit relocation flows instead of a simplex action. Used by the
  // MPC controllers, whose plans fix pair routings (and thus arrival times)
  // that a detour through the desired-distribution pipeline would re-derive.
  StepResult step_flows(const RebalancingFlow& flows);

  bool done() const { return state_.t >= scenario_.episode_len; }
  const FleetState& state() const { return state_; }
  const Scenario& scenario() const { return scenario_; }
  Observation observation() const;
  // The same demand estimate the observation features are built from
  // (zero rates once the episode is over).
  DemandForecast forecast() const { return forecast_for(state_.t); }

  // Realized demand matrices, indices 0..episode_len (drawn at reset).
  const DemandMatrix& realized_demand(int t) const;

 private:
  DemandForecast forecast_for(int t) const;
  PassengerFlow match_and_dispatch(int t);
  StepResult advance_with(const RebalancingFlow& y);

  Scenario scenario_;
  double obs_noise_sigma_;
  FleetState state_;
  std::vector<DemandMatrix> realized_;
  std::uint64_t seed_ = 0;
  bool started_ = false;
};

// One JSON line per step, used by the episode trace export and dataset-io.
std::string step_result_to_json(const StepResult& r);

}  // namespace amod

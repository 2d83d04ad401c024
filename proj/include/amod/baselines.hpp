#pragma once

#include <string>
#include <vector>

#include "amod/env.hpp"
#include "amod/flow.hpp"
#include "amod/rng.hpp"

namespace amod {

// Dirichlet(1,...,1): uniform over the simplex.
std::vector<double> random_policy(const Observation& obs, Rng& rng);

// Target share 1/N for every station.
std::vector<double> equal_distribution_policy(const Observation& obs);

// The current idle distribution is its own rebalancing fixed point, so this
// action induces zero relocation flow.
std::vector<double> no_rebalancing_policy(const Observation& obs);

// Normalized origin demand averaged over the forecast window; uniform when
// the window holds no demand. Scale-invariant in the forecast.
std::vector<double> greedy_heuristic(const Observation& obs, const DemandForecast& forecast);

enum class MpcMode { Oracle, Forecast };

// Receding-horizon plan over the next `horizon` env steps. Index k of each
// flow list covers step t + k: passenger_flows[0] is structurally zero (step
// t is matched before the controller runs) and so is
// rebalancing_flows[horizon] (a relocation started on the last planned step
// cannot arrive inside the window).
struct MpcPlan {
  int t = 0;
  int horizon = 0;
  std::vector<Grid2<long>> passenger_flows;    // size horizon + 1
  std::vector<Grid2<long>> rebalancing_flows;  // size horizon + 1
  Money objective = 0;  // planned trip profit minus relocation cost, cents
};

// Profit-maximal joint matching + relocation plan against an explicit demand
// window; window[k] holds the demand for step state.t + 1 + k. The program is
// a time-expanded min-cost flow (vehicle conservation per station and step),
// so the relaxation already has an integral optimum. Deterministic.
MpcPlan mpc_plan(const FleetState& state, const Scenario& scenario,
                 const std::vector<DemandMatrix>& window);

// Demand windows for the two information models. Both clamp at the episode
// end. The forecast variant draws a noisy rate estimate and rounds it to
// integers stochastically (floor + Bernoulli on the fraction) so the expected
// window matches the estimate; it throws HorizonExceedsData when the horizon
// outruns the scenario's forecast coverage (plan_horizon).
std::vector<DemandMatrix> oracle_window(const AmodEnv& env, int horizon);
std::vector<DemandMatrix> forecast_window(const Scenario& scenario, int t, int horizon,
                                          double noise_sigma, Rng& rng);

// First-step relocation decision of a plan, with its cost priced out.
RebalancingFlow first_step_flow(const MpcPlan& plan, const Scenario& scenario);

// One receding-horizon step: build the window for `mode`, plan, and return
// the first-step relocation flows (always feasible for the current idle).
// `rng` and `noise_sigma` only matter in Forecast mode.
RebalancingFlow mpc_control(const AmodEnv& env, MpcMode mode, int horizon, Rng& rng,
                            double noise_sigma = 0.0);

std::string mpc_plan_to_json(const MpcPlan& plan);

}  // namespace amod

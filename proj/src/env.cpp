#include "amod/env.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "amod/rng.hpp"

namespace amod {

namespace {

constexpr std::uint64_t kDemandStream = 0xD3;
constexpr std::uint64_t kObsNoiseStream = 0x0B;

// A dispatched vehicle is unavailable for at least one step, even when the
// scenario declares a zero travel time (self-trips).
int arrival_step(int depart, int travel) { return depart + std::max(travel, 1); }

}  // namespace

Observation build_observation(const FleetState& state, const Scenario& scenario,
                              const DemandForecast& forecast) {
  require(forecast.t == state.t, "build_observation: forecast base step mismatch");
  const int n = scenario.n_stations;
  const int k = scenario.plan_horizon;
  const double fleet = static_cast<double>(scenario.fleet_size);

  Observation obs;
  obs.t = state.t;
  obs.node_features = Grid2<double>(n, 2 * k + 2);

  for (int i = 0; i < n; ++i) obs.node_features(i, 0) = state.idle[i] / fleet;

  // Projected idle: current idle plus arrivals scheduled up to each slot.
  for (int i = 0; i < n; ++i)
    for (int h = 1; h <= k; ++h) obs.node_features(i, h) = state.idle[i];
  for (const auto& [key, count] : state.in_transit) {
    const auto& [arrival, dest] = key;
    for (int h = 1; h <= k; ++h)
      if (arrival <= state.t + h) obs.node_features(dest, h) += count;
  }
  for (int i = 0; i < n; ++i)
    for (int h = 1; h <= k; ++h) obs.node_features(i, h) /= fleet;

  // Origin profit potential per horizon slot, scaled by the block max.
  double max_abs = 0.0;
  for (int h = 0; h <= k; ++h)
    for (int i = 0; i < n; ++i) {
      double pot = 0.0;
      for (int j = 0; j < n; ++j)
        pot += forecast.rates(h, i, j) *
               to_currency(scenario.price_cents(i, j) - scenario.cost_cents(i, j));
      obs.node_features(i, k + 1 + h) = pot;
      max_abs = std::max(max_abs, std::fabs(pot));
    }
  if (max_abs > 0.0)
    for (int i = 0; i < n; ++i)
      for (int h = 0; h <= k; ++h) obs.node_features(i, k + 1 + h) /= max_abs;

  for (double v : obs.node_features.flat())
    require(std::isfinite(v), "build_observation: non-finite feature");

  // Complete graph with self-loops under symmetric degree normalization.
  obs.adjacency = Grid2<double>(n, n, 1.0 / n);
  return obs;
}

AmodEnv::AmodEnv(Scenario scenario, double obs_noise_sigma)
    : scenario_(std::move(scenario)), obs_noise_sigma_(obs_noise_sigma) {
  scenario_.validate();
}

DemandForecast AmodEnv::forecast_for(int t) const {
  const int k = scenario_.plan_horizon;
  const int n = scenario_.n_stations;
  DemandForecast f;
  f.t = t;
  f.noise_sigma = obs_noise_sigma_;
  if (t < scenario_.episode_len) {
    Rng rng(mix_seed(seed_, kObsNoiseStream, static_cast<std::uint64_t>(t)));
    f = forecast_demand(scenario_, t, rng, obs_noise_sigma_);
  } else {
    // Terminal state: the episode is over, no further demand exists.
    f.rates = Grid3<double>(k + 1, n, n);
  }
  return f;
}

PassengerFlow AmodEnv::match_and_dispatch(int t) {
  const int n = scenario_.n_stations;
  const DemandMatrix& d = realized_[t];
  Grid2<Money> price(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) price(i, j) = scenario_.price_at_cents(t, i, j);
  Grid2<Money> cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = scenario_.cost_cents(i, j);

  const PassengerFlow x = solve_matching(d, price, cost, state_.idle);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (x.x(i, j) > 0) {
        state_.idle[i] -= x.x(i, j);
        require(state_.idle[i] >= 0, "matching dispatched more vehicles than idle");
        state_.in_transit[{arrival_step(t, scenario_.travel_time(i, j)), j}] += x.x(i, j);
      }
  return x;
}

Observation AmodEnv::reset(std::uint64_t seed) {
  seed_ = seed;
  started_ = true;

  const int n = scenario_.n_stations;
  state_ = FleetState{};
  state_.idle.assign(n, scenario_.fleet_size / n);
  for (int i = 0; i < scenario_.fleet_size % n; ++i) state_.idle[i] += 1;

  realized_.clear();
  realized_.reserve(scenario_.episode_len + 1);
  for (int t = 0; t <= scenario_.episode_len; ++t) {
    Rng rng(mix_seed(seed_, kDemandStream, static_cast<std::uint64_t>(t)));
    realized_.push_back(sample_demand(scenario_, t, rng));
  }

  match_and_dispatch(0);
  require(state_.total() == scenario_.fleet_size, "vehicle conservation after reset");
  return observation();
}

StepResult AmodEnv::step(const std::vector<double>& action) {
  require(started_, "step before reset");
  if (done()) throw EpisodeDone("episode is over; call reset");

  const int n = scenario_.n_stations;

  // (a) Rebalance toward the desired idle distribution.
  const DesiredCounts target = desired_counts(action, state_.idle);
  Grid2<Money> cost(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) cost(i, j) = scenario_.cost_cents(i, j);
  return advance_with(solve_rebalancing(state_.idle, target, cost));
}

StepResult AmodEnv::step_flows(const RebalancingFlow& flows) {
  require(started_, "step before reset");
  if (done()) throw EpisodeDone("episode is over; call reset");

  const int n = scenario_.n_stations;
  if (flows.y.rows() != n || flows.y.cols() != n)
    throw DimensionMismatch("step_flows: flow grid must be N x N");

  RebalancingFlow y = flows;
  y.cost = 0;
  std::vector<long> outflow(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const long v = y.y(i, j);
      require(v >= 0, "step_flows: negative flow");
      if (i == j) {
        require(v == 0, "step_flows: nonzero diagonal flow");
        continue;
      }
      outflow[i] += v;
      y.cost += v * scenario_.cost_cents(i, j);
    }
  for (int i = 0; i < n; ++i)
    require(outflow[i] <= state_.idle[i], "step_flows: outflow exceeds idle");
  return advance_with(y);
}

StepResult AmodEnv::advance_with(const RebalancingFlow& y) {
  const int n = scenario_.n_stations;
  const int t = state_.t;
  StepResult result;

  // (a) Dispatch the chosen relocations.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (y.y(i, j) > 0) {
        state_.idle[i] -= y.y(i, j);
        require(state_.idle[i] >= 0, "rebalancing dispatched more vehicles than idle");
        state_.in_transit[{arrival_step(t, scenario_.travel_time(i, j)), j}] += y.y(i, j);
      }

  // (b) Advance time and credit arrivals.
  state_.t = t + 1;
  for (auto it = state_.in_transit.begin(); it != state_.in_transit.end();) {
    const auto& [arrival, dest] = it->first;
    require(arrival > t, "stale in-transit entry");
    if (arrival == state_.t) {
      state_.idle[dest] += it->second;
      it = state_.in_transit.erase(it);
    } else {
      ++it;
    }
  }

  // (c) Realize and serve the next step's demand.
  const DemandMatrix& d = realized_[state_.t];
  const PassengerFlow x = match_and_dispatch(state_.t);
  long served = 0, unserved = 0;
  Money lost = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      served += x.x(i, j);
      const long miss = d.counts(i, j) - x.x(i, j);
      unserved += miss;
      const Money margin =
          scenario_.price_at_cents(state_.t, i, j) - scenario_.cost_cents(i, j);
      if (margin > 0) lost += miss * margin;
    }

  // (d) Reward and bookkeeping.
  result.info.passenger_profit = x.profit;
  result.info.rebalancing_cost = y.cost;
  result.info.served_demand = served;
  result.info.unserved_demand = unserved;
  result.info.lost_profit = lost;
  result.reward_cents = x.profit - y.cost;
  result.reward = to_currency(result.reward_cents);
  result.done = done();
  require(state_.total() == scenario_.fleet_size, "vehicle conservation after step");
  result.next_obs = observation();
  return result;
}

Observation AmodEnv::observation() const {
  require(started_, "observation before reset");
  return build_observation(state_, scenario_, forecast_for(state_.t));
}

const DemandMatrix& AmodEnv::realized_demand(int t) const {
  require(started_, "realized_demand before reset");
  require(t >= 0 && t < static_cast<int>(realized_.size()),
          "realized_demand: step out of range");
  return realized_[t];
}

std::string step_result_to_json(const StepResult& r) {
  nlohmann::json j;
  j["t"] = r.next_obs.t;
  j["reward"] = r.reward;
  j["reward_cents"] = r.reward_cents;
  j["done"] = r.done;
  j["passenger_profit"] = to_currency(r.info.passenger_profit);
  j["rebalancing_cost"] = to_currency(r.info.rebalancing_cost);
  j["served_demand"] = r.info.served_demand;
  j["unserved_demand"] = r.info.unserved_demand;
  j["lost_profit"] = to_currency(r.info.lost_profit);
  return j.dump();
}

}  // namespace amod

#include "amod/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "amod/dirichlet.hpp"
#include "amod/errors.hpp"

namespace amod {

namespace {

int station_count(const Observation& obs) {
  const int n = obs.node_features.rows();
  require(n > 0, "policy: observation has no stations");
  return n;
}

}  // namespace

std::vector<double> random_policy(const Observation& obs, Rng& rng) {
  DirichletDist prior;
  prior.concentration.assign(station_count(obs), 1.0);
  return dirichlet_sample(prior, rng);
}

std::vector<double> equal_distribution_policy(const Observation& obs) {
  const int n = station_count(obs);
  return std::vector<double>(n, 1.0 / n);
}

std::vector<double> no_rebalancing_policy(const Observation& obs) {
  const int n = station_count(obs);
  // Feature column 0 is idle / fleet_size; the shared scale cancels.
  std::vector<double> share(n);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    share[i] = obs.node_features(i, 0);
    total += share[i];
  }
  if (total <= 0.0) return std::vector<double>(n, 1.0 / n);
  for (double& s : share) s /= total;
  return share;
}

std::vector<double> greedy_heuristic(const Observation& obs, const DemandForecast& forecast) {
  const int n = station_count(obs);
  if (forecast.rates.dim1() != n || forecast.rates.dim2() != n)
    throw DimensionMismatch("greedy_heuristic: forecast shape does not match observation");

  const int slices = forecast.rates.dim0();
  require(slices > 0, "greedy_heuristic: empty forecast");
  std::vector<double> origin(n, 0.0);
  double total = 0.0;
  for (int k = 0; k < slices; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double r = forecast.rates(k, i, j) / slices;
        origin[i] += r;
        total += r;
      }
  if (total <= 0.0) return std::vector<double>(n, 1.0 / n);
  for (double& d : origin) d /= total;
  return origin;
}

// ---------------------------------------------------------------------------
// MPC: time-expanded min-cost flow over stations x {t .. t + W}.
// ---------------------------------------------------------------------------

namespace {

enum class ArcKind { Hold, End, Reb, Pax };

struct ArcTag {
  ArcKind kind;
  int k = 0;  // offset from plan start
  int i = 0;
  int j = 0;
};

}  // namespace

MpcPlan mpc_plan(const FleetState& state, const Scenario& scenario,
                 const std::vector<DemandMatrix>& window) {
  const int n = scenario.n_stations;
  const int w = static_cast<int>(window.size());
  require(static_cast<int>(state.idle.size()) == n, "mpc_plan: state/scenario mismatch");
  for (const DemandMatrix& d : window) {
    if (d.counts.rows() != n || d.counts.cols() != n)
      throw DimensionMismatch("mpc_plan: demand window shape");
    for (long v : d.counts.flat()) require(v >= 0, "mpc_plan: negative demand");
  }

  MpcPlan plan;
  plan.t = state.t;
  plan.horizon = w;
  plan.passenger_flows.assign(w + 1, Grid2<long>(n, n));
  plan.rebalancing_flows.assign(w + 1, Grid2<long>(n, n));
  if (w == 0) return plan;

  // Node (i, k) = station i at step t + k; one extra collector node absorbs
  // every vehicle that is still in view at the end of the window.
  const auto node = [n](int i, int k) { return k * n + i; };
  const int sink = (w + 1) * n;
  const long fleet = scenario.fleet_size;

  McfProblem p;
  p.n_nodes = sink + 1;
  p.supply.assign(p.n_nodes, 0);
  long injected = 0;
  for (int i = 0; i < n; ++i) {
    p.supply[node(i, 0)] += state.idle[i];
    injected += state.idle[i];
  }
  for (const auto& [key, count] : state.in_transit) {
    const auto& [arrival, dest] = key;
    const int k = arrival - state.t;
    require(k > 0, "mpc_plan: in-transit entry in the past");
    if (k <= w) {
      p.supply[node(dest, k)] += count;
      injected += count;
    }
  }
  p.supply[sink] = -injected;

  std::vector<ArcTag> tags;
  const auto push = [&](int from, int to, long cap, Money cost, ArcTag tag) {
    p.arcs.push_back({from, to, cap, cost});
    tags.push_back(tag);
  };

  for (int k = 0; k < w; ++k)
    for (int i = 0; i < n; ++i)
      push(node(i, k), node(i, k + 1), fleet, 0, {ArcKind::Hold, k, i, i});
  for (int i = 0; i < n; ++i)
    push(node(i, w), sink, fleet, 0, {ArcKind::End, w, i, i});

  // Relocations may start at any planned step; ones that would land beyond
  // the window only cost money, so they are never part of an optimum.
  for (int k = 0; k < w; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const int tau = std::max(scenario.travel_time(i, j), 1);
        if (k + tau > w) continue;
        push(node(i, k), node(j, k + tau), fleet, scenario.cost_cents(i, j),
             {ArcKind::Reb, k, i, j});
      }

  // Trips matched at step t + k; vehicles that land beyond the window leave
  // through the collector but still earn their margin.
  for (int k = 1; k <= w; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const long d = window[k - 1].counts(i, j);
        if (d <= 0) continue;
        const Money margin =
            scenario.price_at_cents(state.t + k, i, j) - scenario.cost_cents(i, j);
        if (margin <= 0) continue;
        const int tau = std::max(scenario.travel_time(i, j), 1);
        const int to = k + tau <= w ? node(j, k + tau) : sink;
        push(node(i, k), to, d, -margin, {ArcKind::Pax, k, i, j});
      }

  const McfSolution sol = solve_min_cost_flow_free(p);
  plan.objective = -sol.cost;
  for (std::size_t a = 0; a < p.arcs.size(); ++a) {
    if (sol.flow[a] == 0) continue;
    const ArcTag& tag = tags[a];
    if (tag.kind == ArcKind::Pax)
      plan.passenger_flows[tag.k](tag.i, tag.j) = sol.flow[a];
    else if (tag.kind == ArcKind::Reb)
      plan.rebalancing_flows[tag.k](tag.i, tag.j) = sol.flow[a];
  }
  return plan;
}

std::vector<DemandMatrix> oracle_window(const AmodEnv& env, int horizon) {
  require(horizon >= 0, "oracle_window: negative horizon");
  const int t = env.state().t;
  const int last = std::min(t + horizon, env.scenario().episode_len);
  std::vector<DemandMatrix> window;
  window.reserve(static_cast<std::size_t>(std::max(last - t, 0)));
  for (int step = t + 1; step <= last; ++step) window.push_back(env.realized_demand(step));
  return window;
}

std::vector<DemandMatrix> forecast_window(const Scenario& scenario, int t, int horizon,
                                          double noise_sigma, Rng& rng) {
  require(horizon >= 0, "forecast_window: negative horizon");
  if (horizon > scenario.plan_horizon)
    throw HorizonExceedsData("forecast covers " + std::to_string(scenario.plan_horizon) +
                             " steps ahead, horizon " + std::to_string(horizon) + " requested");
  const int n = scenario.n_stations;
  const int last = std::min(t + horizon, scenario.episode_len);
  std::vector<DemandMatrix> window;
  if (last <= t) return window;

  const DemandForecast f = forecast_demand(scenario, t, rng, noise_sigma);
  for (int step = t + 1; step <= last; ++step) {
    DemandMatrix d;
    d.t = step;
    d.counts = Grid2<long>(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double rate = f.rates(step - t, i, j);
        const double fl = std::floor(rate);
        const double frac = rate - fl;
        long v = static_cast<long>(fl);
        // Unbiased integerization; exact rates stay put without an rng draw.
        if (frac > 0.0 && rng.uniform() < frac) v += 1;
        d.counts(i, j) = v;
      }
    window.push_back(std::move(d));
  }
  return window;
}

RebalancingFlow first_step_flow(const MpcPlan& plan, const Scenario& scenario) {
  RebalancingFlow first;
  first.y = plan.rebalancing_flows.front();
  first.cost = 0;
  for (int i = 0; i < scenario.n_stations; ++i)
    for (int j = 0; j < scenario.n_stations; ++j)
      if (i != j) first.cost += first.y(i, j) * scenario.cost_cents(i, j);
  return first;
}

RebalancingFlow mpc_control(const AmodEnv& env, MpcMode mode, int horizon, Rng& rng,
                            double noise_sigma) {
  const Scenario& scn = env.scenario();
  const std::vector<DemandMatrix> window =
      mode == MpcMode::Oracle
          ? oracle_window(env, horizon)
          : forecast_window(scn, env.state().t, horizon, noise_sigma, rng);
  return first_step_flow(mpc_plan(env.state(), scn, window), scn);
}

std::string mpc_plan_to_json(const MpcPlan& plan) {
  nlohmann::json j;
  j["t"] = plan.t;
  j["horizon"] = plan.horizon;
  j["objective_cents"] = plan.objective;
  const auto grids = [](const std::vector<Grid2<long>>& flows) {
    nlohmann::json out = nlohmann::json::array();
    for (const Grid2<long>& g : flows) {
      nlohmann::json grid = nlohmann::json::array();
      for (int i = 0; i < g.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int k = 0; k < g.cols(); ++k) row.push_back(g(i, k));
        grid.push_back(std::move(row));
      }
      out.push_back(std::move(grid));
    }
    return out;
  };
  j["passenger"] = grids(plan.passenger_flows);
  j["rebalancing"] = grids(plan.rebalancing_flows);
  return j.dump();
}

}  // namespace amod

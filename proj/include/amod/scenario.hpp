#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amod/grid.hpp"
#include "amod/money.hpp"

namespace amod {

// Static description of a transportation network: stations, travel times,
// prices, operating cost and the time-dependent Poisson demand rates.
// Immutable after construction; safe to share across threads.
struct Scenario {
  std::string name;
  int n_stations = 0;
  double step_minutes = 3.0;
  int episode_len = 20;   // T
  int plan_horizon = 6;   // K
  int fleet_size = 0;     // M
  Money cost_per_step_cents = 0;
  Grid2<int> travel_time;         // steps, diagonal 0
  Grid2<Money> price_cents;       // static per OD pair
  Grid3<double> demand_rate;      // (T+K) x N x N Poisson rates per step
  // Optional per-step price override, T x N x N; empty means static prices.
  std::optional<Grid3<Money>> price_override_cents;

  // Travel cost is always derived from travel time, never stored.
  Money cost_cents(int i, int j) const { return cost_per_step_cents * travel_time(i, j); }

  Money price_at_cents(int t, int i, int j) const {
    if (price_override_cents) {
      const int tt = t < episode_len ? t : episode_len - 1;
      return (*price_override_cents)(tt, i, j);
    }
    return price_cents(i, j);
  }

  // Throws ValidationError naming the offending field.
  void validate() const;
};

Scenario load_scenario(const std::string& path);
void save_scenario(const Scenario& s, const std::string& path);

// Parse/serialize without touching the filesystem (used by the loaders and
// by the scenario hash).
Scenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const Scenario& s);

// Stable content hash used to mark datasets and training logs.
std::uint64_t scenario_hash(const Scenario& s);

// Parameters for the synthetic scenario generator. Station positions, trip
// economics and a tidal origin/destination imbalance are all derived
// deterministically from (spec, seed).
struct SynthSpec {
  int n_stations = 4;
  int fleet_size = 20;
  double mean_rate = 1.0;    // mean off-diagonal demand rate per step
  double imbalance = 2.0;    // 0 = exactly symmetric demand
  int episode_len = 20;
  int plan_horizon = 6;
  double step_minutes = 3.0;
  double cost_per_step = 0.5;
  double base_fare = 1.0;
  double fare_per_step = 0.8;
  int max_travel_steps = 3;
  std::string name = "synthetic";
};

Scenario make_synthetic_scenario(const SynthSpec& spec, std::uint64_t seed);

// One taxi trip record; minute is relative to the start of the data window.
struct TripRecord {
  int origin = 0;
  int dest = 0;
  double depart_minute = 0.0;
  double price = 0.0;
};

struct TripAggregate {
  Grid3<double> demand_rate;  // n_steps x N x N, per-step rates
  Grid2<double> price;        // trip-count-weighted mean fare per OD
};

// Bins trip records into per-step Poisson rates and mean prices.
// The record window spans n_bins * bin_minutes; bin_minutes must be a
// multiple of step_minutes.
TripAggregate aggregate_trip_records(const std::vector<TripRecord>& records,
                                     int n_stations, int n_bins, double bin_minutes,
                                     double step_minutes);

// CSV with header origin,dest,depart_minute,price.
std::vector<TripRecord> load_trip_records(const std::string& path);

}  // namespace amod

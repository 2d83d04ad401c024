#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "amod/env.hpp"

namespace amod {

// One (s, a, r, s') record. Rewards are stored in currency units, unscaled;
// the training-time scale lives in the dataset metadata so a dataset can be
// reused under a different scaling.
struct Transition {
  int episode_id = 0;
  int step_id = 0;
  Observation obs;
  std::vector<double> action;
  double reward = 0.0;
  Observation next_obs;
  bool done = false;
  std::optional<double> mc_return;  // discounted return of the behavior run
};

struct DatasetMeta {
  std::string label = "custom";  // M, H, G, E, or custom
  std::uint64_t scenario_hash = 0;
  std::uint64_t seed = 0;
  int n_stations = 0;
  int feat_dim = 0;
  int episode_len = 0;
  double reward_scale = 0.01;
};

struct OfflineDataset {
  DatasetMeta meta;
  Grid2<double> adjacency;  // shared by every observation
  std::vector<Transition> transitions;

  std::size_t size() const { return transitions.size(); }
};

using PolicyFn = std::function<std::vector<double>(const Observation&)>;

// Rolls complete episodes (episode e reset with mix_seed(seed, stream, e))
// until at least n_transitions are recorded. Throws PolicyFailure when the
// policy returns something that is not a distribution over stations.
OfflineDataset collect_dataset(AmodEnv& env, const PolicyFn& policy,
                               int n_transitions, std::uint64_t seed,
                               const std::string& label);

// JSON-lines: header with format version and a content checksum, then one
// line per transition. Adjacency is stored once in the header.
void save_dataset(const OfflineDataset& dataset, const std::string& path);
OfflineDataset load_dataset(const std::string& path);

struct CoverageStats {
  double relative_reward = 0.0;  // NaN when no expert reference was given
  double spread = 0.0;           // mean over components of (max - min)
  double iqr = 0.0;              // mean over components of q99 - q01
  double mean_episode_reward = 0.0;
};

CoverageStats coverage_stats(const OfflineDataset& dataset,
                             std::optional<double> expert_mean_reward = {});

// Type-7 quantile (linear interpolation) of an unsorted sample, p in [0, 1].
double quantile(std::vector<double> values, double p);

// Discounted Monte-Carlo return of each transition's state to its episode
// end, in the dataset's unscaled reward units. Throws BrokenEpisode when an
// episode's records are not contiguous 0..T-1 with done only at the tail.
std::vector<double> compute_reference_values(const OfflineDataset& dataset,
                                             double gamma);

// Stores compute_reference_values into each transition's mc_return.
void annotate_reference_values(OfflineDataset& dataset, double gamma);

}  // namespace amod

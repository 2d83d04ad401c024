#include "amod/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "amod/errors.hpp"
#include "amod/rng.hpp"

namespace amod {
namespace {

using nlohmann::json;

constexpr std::uint64_t kCollectStream = 0xDA7A;
constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a(std::uint64_t h, const std::string& bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

void check_simplex_action(const std::vector<double>& a, int n) {
  if (static_cast<int>(a.size()) != n)
    throw PolicyFailure("policy returned " + std::to_string(a.size()) +
                        " components for " + std::to_string(n) + " stations");
  double sum = 0.0;
  for (double v : a) {
    if (!std::isfinite(v) || v < -1e-9)
      throw PolicyFailure("policy action has a negative or non-finite component");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw PolicyFailure("policy action does not sum to 1");
}

json grid_to_json(const Grid2<double>& g) { return json(g.flat()); }

Grid2<double> grid_from_json(const json& j, int rows, int cols) {
  Grid2<double> g(rows, cols);
  const auto vals = j.get<std::vector<double>>();
  if (vals.size() != g.flat().size())
    throw ParseError("grid length " + std::to_string(vals.size()) +
                     " does not match " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  g.flat() = vals;
  return g;
}

json transition_to_json(const Transition& tr) {
  json j{{"episode", tr.episode_id},
         {"step", tr.step_id},
         {"obs", grid_to_json(tr.obs.node_features)},
         {"action", tr.action},
         {"reward", tr.reward},
         {"next_obs", grid_to_json(tr.next_obs.node_features)},
         {"done", tr.done}};
  if (tr.mc_return) j["mc_return"] = *tr.mc_return;
  return j;
}

}  // namespace

OfflineDataset collect_dataset(AmodEnv& env, const PolicyFn& policy,
                               int n_transitions, std::uint64_t seed,
                               const std::string& label) {
  require(n_transitions >= 1, "collect_dataset: need at least one transition");
  OfflineDataset ds;
  const int n = env.scenario().n_stations;
  int episode = 0;
  while (static_cast<int>(ds.transitions.size()) < n_transitions) {
    Observation obs = env.reset(mix_seed(seed, kCollectStream, episode));
    if (episode == 0) {
      ds.adjacency = obs.adjacency;
      ds.meta.label = label;
      ds.meta.scenario_hash = scenario_hash(env.scenario());
      ds.meta.seed = seed;
      ds.meta.n_stations = n;
      ds.meta.feat_dim = obs.node_features.cols();
      ds.meta.episode_len = env.scenario().episode_len;
    }
    while (!env.done()) {
      std::vector<double> action = policy(obs);
      check_simplex_action(action, n);
      StepResult r = env.step(action);
      Transition tr;
      tr.episode_id = episode;
      tr.step_id = obs.t;
      tr.obs = std::move(obs);
      tr.action = std::move(action);
      tr.reward = r.reward;
      tr.next_obs = r.next_obs;
      tr.done = r.done;
      ds.transitions.push_back(std::move(tr));
      obs = std::move(r.next_obs);
    }
    ++episode;
  }
  return ds;
}

void save_dataset(const OfflineDataset& dataset, const std::string& path) {
  std::vector<std::string> lines;
  lines.reserve(dataset.transitions.size());
  std::uint64_t checksum = kFnvOffset;
  for (const Transition& tr : dataset.transitions) {
    lines.push_back(transition_to_json(tr).dump());
    checksum = fnv1a(checksum, lines.back() + "\n");
  }
  json header{{"format", "amod-dataset"},
              {"version", 1},
              {"label", dataset.meta.label},
              {"scenario_hash", dataset.meta.scenario_hash},
              {"seed", dataset.meta.seed},
              {"n_stations", dataset.meta.n_stations},
              {"feat_dim", dataset.meta.feat_dim},
              {"episode_len", dataset.meta.episode_len},
              {"reward_scale", dataset.meta.reward_scale},
              {"size", dataset.transitions.size()},
              {"adjacency", grid_to_json(dataset.adjacency)},
              {"checksum", checksum}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << header.dump() << "\n";
  for (const std::string& line : lines) out << line << "\n";
  if (!out) throw IoError("short write to " + path);
}

OfflineDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DatasetMissing(path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw ParseError(path + ": missing header line");

  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw ParseError(path + " header: " + e.what());
  }

  OfflineDataset ds;
  try {
    if (header.at("format").get<std::string>() != "amod-dataset")
      throw ParseError(path + ": not a dataset file");
    if (header.at("version").get<int>() != 1)
      throw VersionMismatch(path + ": dataset version " +
                            header.at("version").dump() + ", expected 1");
    ds.meta.label = header.at("label").get<std::string>();
    ds.meta.scenario_hash = header.at("scenario_hash").get<std::uint64_t>();
    ds.meta.seed = header.at("seed").get<std::uint64_t>();
    ds.meta.n_stations = header.at("n_stations").get<int>();
    ds.meta.feat_dim = header.at("feat_dim").get<int>();
    ds.meta.episode_len = header.at("episode_len").get<int>();
    ds.meta.reward_scale = header.at("reward_scale").get<double>();
    ds.adjacency = grid_from_json(header.at("adjacency"), ds.meta.n_stations,
                                  ds.meta.n_stations);
  } catch (const json::exception& e) {
    throw ParseError(path + " header: " + e.what());
  }

  const auto expected_size = header.at("size").get<std::size_t>();
  const auto expected_checksum = header.at("checksum").get<std::uint64_t>();

  std::uint64_t checksum = kFnvOffset;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    checksum = fnv1a(checksum, line + "\n");
    json j;
    try {
      j = json::parse(line);
      Transition tr;
      tr.episode_id = j.at("episode").get<int>();
      tr.step_id = j.at("step").get<int>();
      tr.obs.node_features =
          grid_from_json(j.at("obs"), ds.meta.n_stations, ds.meta.feat_dim);
      tr.obs.adjacency = ds.adjacency;
      tr.obs.t = tr.step_id;
      tr.action = j.at("action").get<std::vector<double>>();
      tr.reward = j.at("reward").get<double>();
      tr.next_obs.node_features =
          grid_from_json(j.at("next_obs"), ds.meta.n_stations, ds.meta.feat_dim);
      tr.next_obs.adjacency = ds.adjacency;
      tr.next_obs.t = tr.step_id + 1;
      tr.done = j.at("done").get<bool>();
      if (j.contains("mc_return")) tr.mc_return = j.at("mc_return").get<double>();
      ds.transitions.push_back(std::move(tr));
    } catch (const json::exception& e) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  if (ds.transitions.size() != expected_size || checksum != expected_checksum)
    throw ChecksumMismatch(path + ": expected " + std::to_string(expected_size) +
                           " transitions with checksum " +
                           std::to_string(expected_checksum) + ", found " +
                           std::to_string(ds.transitions.size()) +
                           " with checksum " + std::to_string(checksum));
  return ds;
}

double quantile(std::vector<double> values, double p) {
  require(!values.empty(), "quantile of an empty sample");
  require(p >= 0.0 && p <= 1.0, "quantile level outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

CoverageStats coverage_stats(const OfflineDataset& dataset,
                             std::optional<double> expert_mean_reward) {
  if (dataset.transitions.empty()) throw EmptyDataset("coverage_stats");
  const int n = static_cast<int>(dataset.transitions.front().action.size());

  CoverageStats st;
  for (int j = 0; j < n; ++j) {
    std::vector<double> comp;
    comp.reserve(dataset.transitions.size());
    for (const Transition& tr : dataset.transitions) comp.push_back(tr.action[j]);
    const auto [mn, mx] = std::minmax_element(comp.begin(), comp.end());
    st.spread += *mx - *mn;
    st.iqr += quantile(comp, 0.99) - quantile(comp, 0.01);
  }
  st.spread /= n;
  st.iqr /= n;

  double total = 0.0;
  int episodes = 0;
  int last_episode = dataset.transitions.front().episode_id - 1;
  for (const Transition& tr : dataset.transitions) {
    if (tr.episode_id != last_episode) {
      ++episodes;
      last_episode = tr.episode_id;
    }
    total += tr.reward;
  }
  st.mean_episode_reward = total / episodes;
  st.relative_reward = expert_mean_reward
                           ? st.mean_episode_reward / *expert_mean_reward
                           : std::numeric_limits<double>::quiet_NaN();
  return st;
}

std::vector<double> compute_reference_values(const OfflineDataset& dataset,
                                             double gamma) {
  require(gamma >= 0.0 && gamma <= 1.0, "discount outside [0, 1]");
  const auto& trs = dataset.transitions;
  std::vector<double> values(trs.size(), 0.0);
  std::size_t i = 0;
  while (i < trs.size()) {
    // One episode = a maximal run with the same episode_id.
    std::size_t j = i;
    while (j < trs.size() && trs[j].episode_id == trs[i].episode_id) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (trs[k].step_id != static_cast<int>(k - i))
        throw BrokenEpisode("episode " + std::to_string(trs[i].episode_id) +
                            " has non-contiguous step ids");
      if (trs[k].done != (k == j - 1))
        throw BrokenEpisode("episode " + std::to_string(trs[i].episode_id) +
                            " has done set away from its tail");
    }
    double g = 0.0;
    for (std::size_t k = j; k-- > i;) {
      g = trs[k].reward + gamma * g;
      values[k] = g;
    }
    i = j;
  }
  return values;
}

void annotate_reference_values(OfflineDataset& dataset, double gamma) {
  const std::vector<double> values = compute_reference_values(dataset, gamma);
  for (std::size_t i = 0; i < values.size(); ++i)
    dataset.transitions[i].mc_return = values[i];
}

}  // namespace amod

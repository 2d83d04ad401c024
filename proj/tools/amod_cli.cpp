#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "amod/baselines.hpp"
#include "amod/dataset.hpp"
#include "amod/errors.hpp"
#include "amod/experiment.hpp"
#include "amod/scenario.hpp"

namespace {

using namespace amod;

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoull(tok, &pos));
      if (pos != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad seed '" + tok + "' in --seed list");
    }
  }
  if (out.empty()) throw ConfigError("--seed needs at least one value");
  return out;
}

bool config_sets_train_key(const std::string& path, const char* key) {
  if (path.empty()) return false;
  std::ifstream in(path);
  if (!in) return false;
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    return false;  // apply_config_json reports the real error
  }
  return j.contains("train") && j["train"].is_object() && j["train"].contains(key);
}

// Options shared by train / eval / transfer. Flags set on the command line
// override values from --config, which override the built-in defaults.
struct CommonOpts {
  std::string scenario;
  std::string agent = "sac";
  std::string seeds = "5,10,42";
  std::string out = ".";
  std::string config;
  std::string dataset;
  std::string checkpoint;
  double obs_noise = 0.0;
  int mpc_horizon = 0;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--scenario", o.scenario, "scenario JSON file");
  sub->add_option("--agent", o.agent,
                  "sac|cql|calql|random|ed|greedy|mpc-oracle|mpc-forecast|none");
  sub->add_option("--seed", o.seeds, "comma-separated seed list (default 5,10,42)");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--config", o.config, "JSON config overlay (flags still win)");
  sub->add_option("--dataset", o.dataset, "offline dataset (JSONL)");
  sub->add_option("--checkpoint", o.checkpoint, "agent checkpoint to load");
  sub->add_option("--obs-noise", o.obs_noise,
                  "sigma of the demand-estimate noise (observations and forecasts)");
  sub->add_option("--mpc-horizon", o.mpc_horizon, "MPC lookahead; 0 = scenario plan horizon");
}

struct TrainHyper {
  int hidden_dim = 0;
  double lr_actor = 0.0;
  double lr_critic = 0.0;
  double discount = 0.0;
  int batch_size = 0;
  double entropy_alpha = 0.0;
  double cql_eta = 0.0;
  double cql_tau = 0.0;
  double reward_scale = 0.0;
  std::string critic_variant;
};

void add_hyper(CLI::App* sub, TrainHyper& h) {
  sub->add_option("--hidden-dim", h.hidden_dim, "GNN hidden width");
  sub->add_option("--lr-actor", h.lr_actor, "actor learning rate");
  sub->add_option("--lr-critic", h.lr_critic, "critic learning rate");
  sub->add_option("--discount", h.discount, "discount factor");
  sub->add_option("--batch-size", h.batch_size, "minibatch size");
  sub->add_option("--entropy-alpha", h.entropy_alpha, "entropy temperature");
  sub->add_option("--cql-eta", h.cql_eta, "conservative penalty weight");
  sub->add_option("--cql-tau", h.cql_tau, "action-gap threshold; >= 0 tunes eta by dual descent");
  sub->add_option("--reward-scale", h.reward_scale, "reward scaling during updates");
  sub->add_option("--critic-variant", h.critic_variant,
                  "critic1|critic2|critic3|critic4|critic1v2|critic3v2");
}

// Builds the final ExperimentConfig: defaults, then --config, then explicit
// flags. For offline cql/calql runs the learning rates default to the
// offline values unless set by a flag or the config file.
ExperimentConfig resolve_config(const CLI::App* sub, const CommonOpts& o, const TrainHyper* h) {
  ExperimentConfig cfg;
  if (!o.config.empty()) apply_config_json(cfg, o.config);
  if (sub->count("--scenario")) cfg.scenario_path = o.scenario;
  if (sub->count("--agent") || o.config.empty()) cfg.agent = parse_agent_kind(o.agent);
  if (sub->count("--seed")) cfg.seeds = parse_seeds(o.seeds);
  if (sub->count("--out")) cfg.out_dir = o.out;
  if (sub->count("--dataset")) cfg.dataset_path = o.dataset;
  if (sub->count("--checkpoint")) cfg.checkpoint_path = o.checkpoint;
  if (sub->count("--obs-noise")) cfg.obs_noise_sigma = o.obs_noise;
  if (sub->count("--mpc-horizon")) cfg.mpc_horizon = o.mpc_horizon;

  if (h != nullptr) {
    if (trains_offline(cfg.agent) && cfg.checkpoint_path.empty()) {
      const TrainConfig od = TrainConfig::offline_defaults();
      if (!sub->count("--lr-actor") && !config_sets_train_key(o.config, "lr_actor"))
        cfg.train.lr_actor = od.lr_actor;
      if (!sub->count("--lr-critic") && !config_sets_train_key(o.config, "lr_critic"))
        cfg.train.lr_critic = od.lr_critic;
    }
    if (sub->count("--hidden-dim")) cfg.train.hidden_dim = h->hidden_dim;
    if (sub->count("--lr-actor")) cfg.train.lr_actor = h->lr_actor;
    if (sub->count("--lr-critic")) cfg.train.lr_critic = h->lr_critic;
    if (sub->count("--discount")) cfg.train.gamma = h->discount;
    if (sub->count("--batch-size")) cfg.train.batch_size = h->batch_size;
    if (sub->count("--entropy-alpha")) cfg.train.entropy_alpha = h->entropy_alpha;
    if (sub->count("--cql-eta")) cfg.train.cql_eta = h->cql_eta;
    if (sub->count("--cql-tau")) cfg.train.cql_threshold_tau = h->cql_tau;
    if (sub->count("--reward-scale")) cfg.train.reward_scale = h->reward_scale;
    if (sub->count("--critic-variant"))
      cfg.train.critic_variant = parse_critic_variant(h->critic_variant);
  }
  return cfg;
}

void print_train_summary(const TrainOutput& out) {
  for (std::size_t i = 0; i < out.logs.size(); ++i) {
    const TrainLog& log = out.logs[i];
    std::ostringstream line;
    line << log.agent << " seed " << log.seed << ": ";
    if (!log.episodes.empty()) {
      const std::size_t n = log.episodes.size();
      const std::size_t w = std::min<std::size_t>(10, n);
      double tail = 0.0;
      for (std::size_t e = n - w; e < n; ++e) tail += log.episodes[e].reward;
      tail /= static_cast<double>(w);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.2f", tail);
      line << n << " episodes, last-" << w << " mean reward " << buf;
    }
    if (!log.updates.empty()) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%ld updates, mean_q %.3f, cql_gap %.3f",
                    log.updates.back().step, log.updates.back().mean_q,
                    log.updates.back().cql_gap);
      if (!log.episodes.empty()) line << "; ";
      line << buf;
    }
    std::cout << line.str() << "\n";
    std::cout << "  checkpoint: " << out.checkpoint_paths[i] << "\n";
    std::cout << "  metrics:    " << out.metrics_paths[i] << "\n";
  }
  for (const std::string& s : out.snapshot_paths) std::cout << "  snapshot:   " << s << "\n";
}

int run_cli(int argc, char** argv) {
  CLI::App app{"amod: station-graph fleet rebalancing lab"};
  app.require_subcommand(1);

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train a learned agent");
  CommonOpts t_common;
  TrainHyper t_hyper;
  int t_episodes = 0;
  long t_steps = 0;
  int t_online_episodes = 0;
  double t_snapshot_ref = 0.0;
  int t_checkpoint_every = 0;
  int t_log_every = 100;
  add_common(train, t_common);
  add_hyper(train, t_hyper);
  train->add_option("--episodes", t_episodes, "online training episodes (sac)");
  train->add_option("--steps", t_steps, "offline gradient steps (cql/calql)");
  train->add_option("--online-episodes", t_online_episodes,
                    "fine-tuning episodes after --checkpoint (calql)");
  train->add_option("--snapshot-ref", t_snapshot_ref,
                    "reference reward; saves -M (0.75x) and -H (0.90x) checkpoints");
  train->add_option("--checkpoint-every", t_checkpoint_every,
                    "periodic checkpoint cadence in episodes; 0 = final only");
  train->add_option("--log-every", t_log_every, "update-record cadence for offline runs");
  train->callback([&] {
    ExperimentConfig cfg = resolve_config(train, t_common, &t_hyper);
    if (train->count("--episodes")) cfg.episodes = t_episodes;
    if (train->count("--steps")) cfg.grad_steps = t_steps;
    if (train->count("--online-episodes")) cfg.online_episodes = t_online_episodes;
    if (train->count("--snapshot-ref")) cfg.snapshot_ref = t_snapshot_ref;
    if (train->count("--checkpoint-every")) cfg.checkpoint_every = t_checkpoint_every;
    if (train->count("--log-every")) cfg.log_every = t_log_every;
    print_train_summary(cmd_train(cfg));
  });

  // eval / transfer ----------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "evaluate a controller with mean actions");
  CommonOpts e_common;
  int e_episodes = 10;
  std::string e_csv;
  std::string e_dump;
  add_common(eval, e_common);
  eval->add_option("--episodes", e_episodes, "evaluation episodes per seed");
  eval->add_option("--csv", e_csv, "write per-episode rewards to this CSV");
  eval->add_option("--dump-plans", e_dump, "debug: write MPC plans as JSONL");
  eval->callback([&] {
    ExperimentConfig cfg = resolve_config(eval, e_common, nullptr);
    if (eval->count("--episodes")) cfg.eval_episodes = e_episodes;
    if (eval->count("--dump-plans")) cfg.plan_dump_path = e_dump;
    const ResultReport rep = cmd_eval(cfg);
    std::cout << format_report(rep);
    if (!e_csv.empty()) write_eval_csv(rep, cfg.seeds, cfg.eval_episodes, e_csv);
  });

  auto* transfer = app.add_subcommand("transfer",
                                      "zero-shot: evaluate a checkpoint on another scenario");
  CommonOpts x_common;
  int x_episodes = 10;
  std::string x_csv;
  add_common(transfer, x_common);
  transfer->add_option("--episodes", x_episodes, "evaluation episodes per seed");
  transfer->add_option("--csv", x_csv, "write per-episode rewards to this CSV");
  transfer->callback([&] {
    ExperimentConfig cfg = resolve_config(transfer, x_common, nullptr);
    if (transfer->count("--episodes")) cfg.eval_episodes = x_episodes;
    const ResultReport rep = cmd_transfer(cfg);
    std::cout << format_report(rep);
    if (!x_csv.empty()) write_eval_csv(rep, cfg.seeds, cfg.eval_episodes, x_csv);
  });

  // ledger -------------------------------------------------------------------
  auto* ledger = app.add_subcommand(
      "ledger", "interactions and costs saved by fine-tuning vs training from scratch");
  std::string l_scratch;
  std::string l_finetune;
  ledger->add_option("--scratch", l_scratch, "metrics JSONL of the from-scratch run")
      ->required();
  ledger->add_option("--finetune", l_finetune, "metrics JSONL of the fine-tuned run")
      ->required();
  ledger->callback([&] { std::cout << format_savings(cmd_ledger(l_scratch, l_finetune)); });

  // dataset ------------------------------------------------------------------
  auto* dataset = app.add_subcommand("dataset", "offline dataset tools");
  dataset->require_subcommand(1);

  auto* collect = dataset->add_subcommand("collect", "roll a behavior policy into a dataset");
  std::string c_scenario;
  std::string c_policy = "ed";
  std::string c_checkpoint;
  std::string c_agent = "sac";
  std::string c_label;
  std::string c_out;
  int c_n = 10000;
  std::uint64_t c_seed = 42;
  double c_gamma = 0.97;
  double c_obs_noise = 0.0;
  collect->add_option("--scenario", c_scenario, "scenario JSON file")->required();
  collect->add_option("--policy", c_policy,
                      "random|ed|greedy|none|checkpoint (checkpoint acts with the mean)");
  collect->add_option("--checkpoint", c_checkpoint, "checkpoint for --policy checkpoint");
  collect->add_option("--agent", c_agent, "algo of the checkpoint (sac|cql|calql)");
  collect->add_option("--label", c_label, "dataset label (M, H, G, E, or custom)");
  collect->add_option("--out", c_out, "output JSONL path")->required();
  collect->add_option("--n", c_n, "minimum number of transitions");
  collect->add_option("--seed", c_seed, "collection seed");
  collect->add_option("--gamma", c_gamma,
                      "discount for the stored per-state returns; < 0 skips them");
  collect->add_option("--obs-noise", c_obs_noise, "sigma of the demand-estimate noise");
  collect->callback([&] {
    const Scenario scn = load_scenario(c_scenario);
    AmodEnv env(scn, c_obs_noise);
    Rng policy_rng(mix_seed(c_seed, kControllerStream));
    std::unique_ptr<Agent> agent;
    PolicyFn fn;
    std::string label = c_label;
    if (c_policy == "random") {
      fn = [&policy_rng](const Observation& o) { return random_policy(o, policy_rng); };
      if (label.empty()) label = "custom";
    } else if (c_policy == "ed") {
      fn = [](const Observation& o) { return equal_distribution_policy(o); };
      if (label.empty()) label = "E";
    } else if (c_policy == "greedy") {
      fn = [&env](const Observation& o) { return greedy_heuristic(o, env.forecast()); };
      if (label.empty()) label = "G";
    } else if (c_policy == "none") {
      fn = [](const Observation& o) { return no_rebalancing_policy(o); };
      if (label.empty()) label = "custom";
    } else if (c_policy == "checkpoint") {
      if (c_checkpoint.empty()) throw ConfigError("--policy checkpoint needs --checkpoint");
      const AgentKind kind = parse_agent_kind(c_agent);
      if (!is_learned(kind)) throw ConfigError("--agent must be a learned algo");
      agent = load_agent_for_rollout(c_checkpoint, scn.n_stations, 2 * scn.plan_horizon + 2,
                                     kind, TrainConfig{});
      fn = [&agent](const Observation& o) { return agent->act(o, ActionMode::Mean); };
      if (label.empty()) label = "custom";
    } else {
      throw ConfigError("unknown policy '" + c_policy + "'");
    }
    OfflineDataset ds = collect_dataset(env, fn, c_n, c_seed, label);
    if (c_gamma >= 0.0) annotate_reference_values(ds, c_gamma);
    save_dataset(ds, c_out);
    const CoverageStats cov = coverage_stats(ds);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "wrote %zu transitions (%s) to %s\nmean episode reward %.2f, action iqr %.4f\n",
                  ds.size(), label.c_str(), c_out.c_str(), cov.mean_episode_reward, cov.iqr);
    std::cout << buf;
  });

  auto* stats = dataset->add_subcommand("stats", "characterize an offline dataset");
  std::string s_in;
  double s_expert = 0.0;
  stats->add_option("--in", s_in, "dataset JSONL path")->required();
  stats->add_option("--expert-mean", s_expert,
                    "expert mean episode reward for the relative-reward column");
  stats->callback([&] {
    const OfflineDataset ds = load_dataset(s_in);
    std::optional<double> expert;
    if (stats->count("--expert-mean")) expert = s_expert;
    const CoverageStats cov = coverage_stats(ds, expert);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "label %s  size %zu  stations %d  features %d  episode_len %d\n",
                  ds.meta.label.c_str(), ds.size(), ds.meta.n_stations, ds.meta.feat_dim,
                  ds.meta.episode_len);
    std::cout << buf;
    std::snprintf(buf, sizeof buf, "scenario_hash %llu  seed %llu  reward_scale %g\n",
                  static_cast<unsigned long long>(ds.meta.scenario_hash),
                  static_cast<unsigned long long>(ds.meta.seed), ds.meta.reward_scale);
    std::cout << buf;
    std::snprintf(buf, sizeof buf, "mean_episode_reward %.2f  spread %.4f  iqr %.4f\n",
                  cov.mean_episode_reward, cov.spread, cov.iqr);
    std::cout << buf;
    if (expert) {
      std::snprintf(buf, sizeof buf, "relative_reward %.3f\n", cov.relative_reward);
      std::cout << buf;
    }
  });

  // scenario -----------------------------------------------------------------
  auto* scenario = app.add_subcommand("scenario", "scenario tools");
  scenario->require_subcommand(1);

  auto* make = scenario->add_subcommand("make", "generate a synthetic scenario");
  SynthSpec spec;
  std::uint64_t m_seed = 1;
  std::string m_out;
  make->add_option("--out", m_out, "output JSON path")->required();
  make->add_option("--stations", spec.n_stations, "number of stations");
  make->add_option("--fleet", spec.fleet_size, "fleet size");
  make->add_option("--mean-rate", spec.mean_rate, "mean off-diagonal demand rate per step");
  make->add_option("--imbalance", spec.imbalance, "tidal origin/destination imbalance");
  make->add_option("--episode-len", spec.episode_len, "steps per episode");
  make->add_option("--plan-horizon", spec.plan_horizon, "forecast/planning horizon");
  make->add_option("--step-minutes", spec.step_minutes, "minutes per step");
  make->add_option("--cost-per-step", spec.cost_per_step, "rebalancing cost per travel step");
  make->add_option("--base-fare", spec.base_fare, "flag-drop fare");
  make->add_option("--fare-per-step", spec.fare_per_step, "fare per travel step");
  make->add_option("--max-travel", spec.max_travel_steps, "max travel time in steps");
  make->add_option("--name", spec.name, "scenario name");
  make->add_option("--seed", m_seed, "generator seed");
  make->callback([&] {
    const Scenario scn = make_synthetic_scenario(spec, m_seed);
    save_scenario(scn, m_out);
    std::cout << "wrote " << m_out << " (hash " << scenario_hash(scn) << ")\n";
  });

  auto* validate = scenario->add_subcommand("validate", "check a scenario file");
  std::string v_in;
  validate->add_option("--in", v_in, "scenario JSON path")->required();
  validate->callback([&] {
    const Scenario scn = load_scenario(v_in);
    std::cout << "ok: " << scn.name << ", " << scn.n_stations << " stations, fleet "
              << scn.fleet_size << ", " << scn.episode_len << " steps, horizon "
              << scn.plan_horizon << ", hash " << scenario_hash(scn) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const amod::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

#include "amod/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "amod/baselines.hpp"
#include "amod/dataset.hpp"
#include "amod/errors.hpp"
#include "amod/optim.hpp"

namespace amod {

namespace {

using nlohmann::json;

constexpr const char* kMetricsFormat = "amod-metrics";
constexpr int kMetricsVersion = 1;

int feat_width(const Scenario& s) { return 2 * s.plan_horizon + 2; }

Algo algo_of(AgentKind kind) {
  switch (kind) {
    case AgentKind::Sac:
      return Algo::Sac;
    case AgentKind::Cql:
      return Algo::Cql;
    case AgentKind::CalQl:
      return Algo::CalQl;
    default:
      throw ConfigError("agent '" + agent_kind_name(kind) + "' has no learner");
  }
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

}  // namespace

AgentKind parse_agent_kind(const std::string& name) {
  if (name == "sac") return AgentKind::Sac;
  if (name == "cql") return AgentKind::Cql;
  if (name == "calql" || name == "cal-ql") return AgentKind::CalQl;
  if (name == "random") return AgentKind::Random;
  if (name == "ed" || name == "equal") return AgentKind::Ed;
  if (name == "greedy") return AgentKind::Greedy;
  if (name == "mpc-oracle") return AgentKind::MpcOracle;
  if (name == "mpc-forecast") return AgentKind::MpcForecast;
  if (name == "none" || name == "no-reb") return AgentKind::None;
  throw ConfigError("unknown agent '" + name + "'");
}

std::string agent_kind_name(AgentKind kind) {
  switch (kind) {
    case AgentKind::Sac:
      return "sac";
    case AgentKind::Cql:
      return "cql";
    case AgentKind::CalQl:
      return "calql";
    case AgentKind::Random:
      return "random";
    case AgentKind::Ed:
      return "ed";
    case AgentKind::Greedy:
      return "greedy";
    case AgentKind::MpcOracle:
      return "mpc-oracle";
    case AgentKind::MpcForecast:
      return "mpc-forecast";
    case AgentKind::None:
      return "none";
  }
  throw ConfigError("bad agent kind");
}

bool is_learned(AgentKind kind) {
  return kind == AgentKind::Sac || kind == AgentKind::Cql || kind == AgentKind::CalQl;
}

bool trains_offline(AgentKind kind) {
  return kind == AgentKind::Cql || kind == AgentKind::CalQl;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (episodes < 0) throw ConfigError("episodes must be >= 0");
  if (grad_steps < 0) throw ConfigError("steps must be >= 0");
  if (online_episodes < 0) throw ConfigError("online_episodes must be >= 0");
  if (obs_noise_sigma < 0.0) throw ConfigError("obs_noise_sigma must be >= 0");
  if (mpc_horizon < 0) throw ConfigError("mpc_horizon must be >= 0");
  if (snapshot_ref < 0.0) throw ConfigError("snapshot_ref must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  try {
    train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

void apply_config_json(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "scenario") {
        cfg.scenario_path = value.get<std::string>();
      } else if (key == "agent") {
        cfg.agent = parse_agent_kind(value.get<std::string>());
      } else if (key == "seeds") {
        cfg.seeds = value.get<std::vector<std::uint64_t>>();
      } else if (key == "eval_episodes") {
        cfg.eval_episodes = value.get<int>();
      } else if (key == "out") {
        cfg.out_dir = value.get<std::string>();
      } else if (key == "dataset") {
        cfg.dataset_path = value.get<std::string>();
      } else if (key == "checkpoint") {
        cfg.checkpoint_path = value.get<std::string>();
      } else if (key == "episodes") {
        cfg.episodes = value.get<int>();
      } else if (key == "steps") {
        cfg.grad_steps = value.get<long>();
      } else if (key == "online_episodes") {
        cfg.online_episodes = value.get<int>();
      } else if (key == "obs_noise_sigma") {
        cfg.obs_noise_sigma = value.get<double>();
      } else if (key == "mpc_horizon") {
        cfg.mpc_horizon = value.get<int>();
      } else if (key == "snapshot_ref") {
        cfg.snapshot_ref = value.get<double>();
      } else if (key == "checkpoint_every") {
        cfg.checkpoint_every = value.get<int>();
      } else if (key == "log_every") {
        cfg.log_every = value.get<int>();
      } else if (key == "plan_dump") {
        cfg.plan_dump_path = value.get<std::string>();
      } else if (key == "train") {
        if (!value.is_object()) throw ConfigError("'train' must be an object");
        for (const auto& [tk, tv] : value.items()) {
          if (tk == "hidden_dim") {
            cfg.train.hidden_dim = tv.get<int>();
          } else if (tk == "lr_actor") {
            cfg.train.lr_actor = tv.get<double>();
          } else if (tk == "lr_critic") {
            cfg.train.lr_critic = tv.get<double>();
          } else if (tk == "gamma") {
            cfg.train.gamma = tv.get<double>();
          } else if (tk == "buffer_size") {
            cfg.train.buffer_size = tv.get<int>();
          } else if (tk == "batch_size") {
            cfg.train.batch_size = tv.get<int>();
          } else if (tk == "entropy_alpha") {
            cfg.train.entropy_alpha = tv.get<double>();
          } else if (tk == "polyak_tau") {
            cfg.train.polyak_tau = tv.get<double>();
          } else if (tk == "target_update_interval") {
            cfg.train.target_update_interval = tv.get<int>();
          } else if (tk == "grad_steps_per_env_step") {
            cfg.train.grad_steps_per_env_step = tv.get<int>();
          } else if (tk == "reward_scale") {
            cfg.train.reward_scale = tv.get<double>();
          } else if (tk == "cql_eta") {
            cfg.train.cql_eta = tv.get<double>();
          } else if (tk == "cql_threshold_tau") {
            cfg.train.cql_threshold_tau = tv.get<double>();
          } else if (tk == "n_importance_samples") {
            cfg.train.n_importance_samples = tv.get<int>();
          } else if (tk == "lr_eta") {
            cfg.train.lr_eta = tv.get<double>();
          } else if (tk == "offline_batch_fraction") {
            cfg.train.offline_batch_fraction = tv.get<double>();
          } else if (tk == "critic_variant") {
            cfg.train.critic_variant = parse_critic_variant(tv.get<std::string>());
          } else {
            throw ConfigError("unknown train config key '" + tk + "'");
          }
        }
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

Stepper make_stepper(AgentKind kind, Agent* agent, ActionMode mode, int mpc_horizon,
                     double noise_sigma, std::ostream* plan_dump) {
  switch (kind) {
    case AgentKind::Sac:
    case AgentKind::Cql:
    case AgentKind::CalQl:
      require(agent != nullptr, "learned stepper needs an agent");
      return [agent, mode](AmodEnv& env, Rng&) {
        return env.step(agent->act(env.observation(), mode));
      };
    case AgentKind::Random:
      return [](AmodEnv& env, Rng& rng) { return env.step(random_policy(env.observation(), rng)); };
    case AgentKind::Ed:
      return [](AmodEnv& env, Rng&) { return env.step(equal_distribution_policy(env.observation())); };
    case AgentKind::Greedy:
      return [](AmodEnv& env, Rng&) {
        return env.step(greedy_heuristic(env.observation(), env.forecast()));
      };
    case AgentKind::None:
      return [](AmodEnv& env, Rng&) { return env.step(no_rebalancing_policy(env.observation())); };
    case AgentKind::MpcOracle:
    case AgentKind::MpcForecast:
      return [kind, mpc_horizon, noise_sigma, plan_dump](AmodEnv& env, Rng& rng) {
        const Scenario& scn = env.scenario();
        const int h = mpc_horizon > 0 ? mpc_horizon : scn.plan_horizon;
        const auto window =
            kind == AgentKind::MpcOracle
                ? oracle_window(env, h)
                : forecast_window(scn, env.state().t, h, noise_sigma, rng);
        const MpcPlan plan = mpc_plan(env.state(), scn, window);
        if (plan_dump != nullptr) *plan_dump << mpc_plan_to_json(plan) << "\n";
        return env.step_flows(first_step_flow(plan, scn));
      };
  }
  throw ConfigError("bad agent kind");
}

EpisodeOutcome run_episode(AmodEnv& env, const Stepper& stepper, std::uint64_t episode_seed,
                           Rng& controller_rng) {
  env.reset(episode_seed);
  EpisodeOutcome out{};
  while (!env.done()) {
    const StepResult r = stepper(env, controller_rng);
    out.reward_cents += r.reward_cents;
    out.reb_cost_cents += r.info.rebalancing_cost;
    out.lost_profit_cents += r.info.lost_profit;
    out.served += r.info.served_demand;
    out.unserved += r.info.unserved_demand;
    ++out.steps;
  }
  out.reward = to_currency(out.reward_cents);
  return out;
}

void save_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open '" + path + "' for writing");
  json meta;
  meta["kind"] = "meta";
  meta["format"] = kMetricsFormat;
  meta["version"] = kMetricsVersion;
  meta["agent"] = log.agent;
  meta["scenario_hash"] = log.scenario_hash;
  meta["seed"] = log.seed;
  meta["episode_len"] = log.episode_len;
  out << meta.dump() << "\n";
  for (const EpisodeRecord& e : log.episodes) {
    json row;
    row["kind"] = "episode";
    row["episode"] = e.episode;
    row["interactions"] = e.interactions;
    row["reward"] = e.reward;
    row["reb_cost_cents"] = e.reb_cost_cents;
    row["lost_profit_cents"] = e.lost_profit_cents;
    row["served"] = e.served;
    row["unserved"] = e.unserved;
    out << row.dump() << "\n";
  }
  for (const UpdateRecord& u : log.updates) {
    json row;
    row["kind"] = "update";
    row["step"] = u.step;
    row["critic_loss"] = u.critic_loss;
    row["actor_loss"] = u.actor_loss;
    row["mean_q"] = u.mean_q;
    row["cql_gap"] = u.cql_gap;
    row["eta"] = u.eta;
    out << row.dump() << "\n";
  }
}

TrainLog load_train_log(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open metrics file '" + path + "'");
  std::string line;
  TrainLog log;
  bool saw_meta = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      const std::string kind = row.at("kind").get<std::string>();
      if (kind == "meta") {
        if (row.at("format").get<std::string>() != kMetricsFormat ||
            row.at("version").get<int>() != kMetricsVersion) {
          throw VersionMismatch(path + ": unsupported metrics format");
        }
        log.agent = row.at("agent").get<std::string>();
        log.scenario_hash = row.at("scenario_hash").get<std::uint64_t>();
        log.seed = row.at("seed").get<std::uint64_t>();
        log.episode_len = row.at("episode_len").get<int>();
        saw_meta = true;
      } else if (kind == "episode") {
        EpisodeRecord e;
        e.episode = row.at("episode").get<int>();
        e.interactions = row.at("interactions").get<long>();
        e.reward = row.at("reward").get<double>();
        e.reb_cost_cents = row.at("reb_cost_cents").get<Money>();
        e.lost_profit_cents = row.at("lost_profit_cents").get<Money>();
        e.served = row.at("served").get<long>();
        e.unserved = row.at("unserved").get<long>();
        log.episodes.push_back(e);
      } else if (kind == "update") {
        UpdateRecord u;
        u.step = row.at("step").get<long>();
        u.critic_loss = row.at("critic_loss").get<double>();
        u.actor_loss = row.at("actor_loss").get<double>();
        u.mean_q = row.at("mean_q").get<double>();
        u.cql_gap = row.at("cql_gap").get<double>();
        u.eta = row.at("eta").get<double>();
        log.updates.push_back(u);
      }
      // Unknown row kinds are skipped so logs stay forward-extensible.
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!saw_meta) throw ParseError(path + ": missing meta header row");
  return log;
}

namespace {

struct RunPaths {
  std::string metrics;
  std::string checkpoint;
  std::string snapshot_m;
  std::string snapshot_h;
};

RunPaths run_paths(const ExperimentConfig& cfg, std::uint64_t seed) {
  const std::string stem = agent_kind_name(cfg.agent) + "-seed" + std::to_string(seed);
  RunPaths p;
  p.metrics = join_path(cfg.out_dir, "metrics-" + stem + ".jsonl");
  p.checkpoint = join_path(cfg.out_dir, "ckpt-" + stem + ".json");
  p.snapshot_m = join_path(cfg.out_dir, "ckpt-" + stem + "-M.json");
  p.snapshot_h = join_path(cfg.out_dir, "ckpt-" + stem + "-H.json");
  return p;
}

// Online loop shared by SAC-from-scratch and Cal-CQL fine-tuning. Reward
// snapshots fire on the running mean of the last ten episodes: 0.75x the
// reference saves the medium checkpoint, 0.90x the high one.
void train_online(const ExperimentConfig& cfg, const Scenario& scn, Agent& agent,
                  std::uint64_t seed, int n_episodes, TrainLog& log, TrainOutput& out,
                  const RunPaths& paths) {
  AmodEnv env(scn, cfg.obs_noise_sigma);
  long interactions = 0;
  bool snapped_m = false;
  bool snapped_h = false;
  std::deque<double> window;
  for (int e = 0; e < n_episodes; ++e) {
    Observation obs = env.reset(mix_seed(seed, kTrainStream, static_cast<std::uint64_t>(e)));
    EpisodeRecord rec{};
    rec.episode = e;
    Money cents = 0;
    while (!env.done()) {
      const std::vector<double> action = agent.act(obs, ActionMode::Sample);
      const StepResult r = env.step(action);
      agent.add_transition(obs, action, r.reward, r.next_obs, r.done);
      if (agent.online_size() + agent.offline_size() >=
          static_cast<std::size_t>(cfg.train.batch_size)) {
        for (int g = 0; g < cfg.train.grad_steps_per_env_step; ++g) agent.update();
      }
      obs = r.next_obs;
      ++interactions;
      cents += r.reward_cents;
      rec.reb_cost_cents += r.info.rebalancing_cost;
      rec.lost_profit_cents += r.info.lost_profit;
      rec.served += r.info.served_demand;
      rec.unserved += r.info.unserved_demand;
    }
    rec.interactions = interactions;
    rec.reward = to_currency(cents);
    log.episodes.push_back(rec);

    window.push_back(rec.reward);
    if (window.size() > 10) window.pop_front();
    double running = 0.0;
    for (double w : window) running += w;
    running /= static_cast<double>(window.size());
    if (cfg.snapshot_ref > 0.0 && !snapped_m && running >= 0.75 * cfg.snapshot_ref) {
      agent.save_checkpoint(paths.snapshot_m);
      out.snapshot_paths.push_back(paths.snapshot_m);
      snapped_m = true;
    }
    if (cfg.snapshot_ref > 0.0 && !snapped_h && running >= 0.90 * cfg.snapshot_ref) {
      agent.save_checkpoint(paths.snapshot_h);
      out.snapshot_paths.push_back(paths.snapshot_h);
      snapped_h = true;
    }
    if (cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0) {
      const std::string periodic =
          join_path(cfg.out_dir, "ckpt-" + agent_kind_name(cfg.agent) + "-seed" +
                                     std::to_string(seed) + "-ep" + std::to_string(e + 1) + ".json");
      agent.save_checkpoint(periodic);
      out.snapshot_paths.push_back(periodic);
    }
  }
}

void train_offline(const ExperimentConfig& cfg, Agent& agent, TrainLog& log) {
  for (long s = 1; s <= cfg.grad_steps; ++s) {
    const UpdateStats st = agent.update();
    if (s % cfg.log_every == 0 || s == cfg.grad_steps) {
      log.updates.push_back(UpdateRecord{s, st.critic_loss, st.actor_loss, st.mean_q, st.cql_gap,
                                         st.eta});
    }
  }
}

}  // namespace

TrainOutput cmd_train(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!is_learned(cfg.agent)) {
    throw ConfigError("agent '" + agent_kind_name(cfg.agent) + "' does not train");
  }
  const bool finetune = !cfg.checkpoint_path.empty();
  if (finetune) {
    if (cfg.agent != AgentKind::CalQl)
      throw ConfigError("resuming from a checkpoint is a calql fine-tuning run");
    if (cfg.online_episodes <= 0)
      throw ConfigError("fine-tuning needs online_episodes > 0");
    if (cfg.dataset_path.empty())
      throw ConfigError("fine-tuning mixes offline batches: dataset required");
    if (cfg.scenario_path.empty()) throw ConfigError("fine-tuning needs a scenario");
  } else if (cfg.agent == AgentKind::Sac) {
    if (cfg.episodes <= 0) throw ConfigError("sac training needs episodes > 0");
    if (cfg.scenario_path.empty()) throw ConfigError("sac training needs a scenario");
  } else {
    if (cfg.grad_steps <= 0) throw ConfigError("offline training needs steps > 0");
    if (cfg.dataset_path.empty()) throw ConfigError("offline training needs a dataset");
  }

  std::filesystem::create_directories(cfg.out_dir);
  TrainOutput out;

  Scenario scn;
  if (!cfg.scenario_path.empty()) scn = load_scenario(cfg.scenario_path);
  OfflineDataset ds;
  if (!cfg.dataset_path.empty()) ds = load_dataset(cfg.dataset_path);

  for (std::uint64_t seed : cfg.seeds) {
    const RunPaths paths = run_paths(cfg, seed);
    TrainLog log;
    log.agent = agent_kind_name(cfg.agent);
    log.seed = seed;

    if (finetune || cfg.agent == AgentKind::Sac) {
      if (!cfg.dataset_path.empty() && ds.meta.scenario_hash != scenario_hash(scn))
        throw IncomparableLogs("dataset was collected on a different scenario");
      log.scenario_hash = scenario_hash(scn);
      log.episode_len = scn.episode_len;
      Agent agent(scn.n_stations, feat_width(scn), algo_of(cfg.agent), cfg.train, seed);
      if (finetune) agent.load_checkpoint(cfg.checkpoint_path);
      if (!cfg.dataset_path.empty()) agent.load_offline(ds);
      const int n_episodes = finetune ? cfg.online_episodes : cfg.episodes;
      train_online(cfg, scn, agent, seed, n_episodes, log, out, paths);
      agent.save_checkpoint(paths.checkpoint);
    } else {
      log.scenario_hash = ds.meta.scenario_hash;
      log.episode_len = ds.meta.episode_len;
      Agent agent(ds.meta.n_stations, ds.meta.feat_dim, algo_of(cfg.agent), cfg.train, seed);
      agent.load_offline(ds);
      train_offline(cfg, agent, log);
      agent.save_checkpoint(paths.checkpoint);
    }

    save_train_log(log, paths.metrics);
    out.logs.push_back(std::move(log));
    out.checkpoint_paths.push_back(paths.checkpoint);
    out.metrics_paths.push_back(paths.metrics);
  }

  write_curve_csv(out.logs,
                  join_path(cfg.out_dir, "curves-" + agent_kind_name(cfg.agent) + ".csv"));
  return out;
}

namespace {

ResultReport eval_with_agent(const ExperimentConfig& cfg, const Scenario& scn, Agent* agent) {
  std::ofstream dump;
  std::ostream* dump_ptr = nullptr;
  if (!cfg.plan_dump_path.empty()) {
    dump.open(cfg.plan_dump_path);
    require(static_cast<bool>(dump), "cannot open '" + cfg.plan_dump_path + "' for writing");
    dump_ptr = &dump;
  }
  const Stepper stepper = make_stepper(cfg.agent, agent, ActionMode::Mean, cfg.mpc_horizon,
                                       cfg.obs_noise_sigma, dump_ptr);

  ResultReport rep;
  rep.agent = agent_kind_name(cfg.agent);
  rep.scenario_hash = scenario_hash(scn);
  AmodEnv env(scn, cfg.obs_noise_sigma);
  for (std::uint64_t seed : cfg.seeds) {
    Rng controller(mix_seed(seed, kControllerStream));
    double seed_sum = 0.0;
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      const EpisodeOutcome out = run_episode(
          env, stepper, mix_seed(seed, kEvalStream, static_cast<std::uint64_t>(e)), controller);
      rep.episode_rewards.push_back(out.reward);
      seed_sum += out.reward;
      rep.ledger.interactions += out.steps;
      rep.ledger.reb_cost_cents += out.reb_cost_cents;
      rep.ledger.lost_profit_cents += out.lost_profit_cents;
      rep.ledger.unserved += out.unserved;
    }
    rep.per_seed_mean.emplace_back(seed, seed_sum / static_cast<double>(cfg.eval_episodes));
  }
  rep.mean_reward = mean_of(rep.episode_rewards);
  rep.std_reward = sample_std(rep.episode_rewards, rep.mean_reward);
  return rep;
}

std::unique_ptr<Agent> agent_for_eval(const ExperimentConfig& cfg, const Scenario& scn) {
  if (!is_learned(cfg.agent)) return nullptr;
  if (cfg.checkpoint_path.empty())
    throw ConfigError("evaluating a learned agent needs a checkpoint");
  return load_agent_for_rollout(cfg.checkpoint_path, scn.n_stations, feat_width(scn), cfg.agent,
                                cfg.train);
}

}  // namespace

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointMissing("no checkpoint at '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  CheckpointInfo info;
  try {
    info.feat_dim = j.at("params").at("actor.gcn.W").at("shape").at(0).get<int>();
    if (j.contains("net")) {
      const json& net = j.at("net");
      info.has_net = true;
      info.algo = net.at("algo").get<std::string>();
      info.n_stations = net.at("n_stations").get<int>();
      info.hidden_dim = net.at("hidden_dim").get<int>();
      info.critic_variant = net.at("critic_variant").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return info;
}

std::unique_ptr<Agent> load_agent_for_rollout(const std::string& checkpoint_path, int n_stations,
                                              int feat_dim, AgentKind kind, TrainConfig train) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint_path);
  Algo algo = algo_of(kind);
  if (info.has_net) {
    train.hidden_dim = info.hidden_dim;
    train.critic_variant = parse_critic_variant(info.critic_variant);
    // The stored algo decides which parameters exist (cql agents carry the
    // dual variable), so it wins for construction; rollouts only use the actor.
    algo = info.algo == "sac" ? Algo::Sac : info.algo == "cql" ? Algo::Cql : Algo::CalQl;
  }
  // Parameters are overwritten by the checkpoint and Mean actions draw no
  // samples, so the construction seed is immaterial.
  auto agent = std::make_unique<Agent>(n_stations, feat_dim, algo, train, 0);
  agent->load_checkpoint(checkpoint_path);
  return agent;
}

ResultReport cmd_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.scenario_path.empty()) throw ConfigError("eval needs a scenario");
  const Scenario scn = load_scenario(cfg.scenario_path);
  const std::unique_ptr<Agent> agent = agent_for_eval(cfg, scn);
  return eval_with_agent(cfg, scn, agent.get());
}

ResultReport cmd_transfer(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!is_learned(cfg.agent)) throw ConfigError("transfer applies to learned agents");
  if (cfg.scenario_path.empty()) throw ConfigError("transfer needs a target scenario");
  if (cfg.checkpoint_path.empty()) throw ConfigError("transfer needs a checkpoint");
  const Scenario scn = load_scenario(cfg.scenario_path);
  // The GCN weights only fix the feature width, so a policy moves to any
  // station count whose scenarios share the plan horizon. Reject early with
  // the widths spelled out instead of failing deep inside load_checkpoint.
  const int have = read_checkpoint_info(cfg.checkpoint_path).feat_dim;
  const int want = feat_width(scn);
  if (have != want) {
    throw FeatureWidthMismatch("checkpoint features " + std::to_string(have) +
                               " != scenario features " + std::to_string(want) +
                               " (plan horizons differ)");
  }
  const std::unique_ptr<Agent> agent = agent_for_eval(cfg, scn);
  const std::uint64_t before = params_checksum(const_view(agent->parameters()));
  ResultReport rep = eval_with_agent(cfg, scn, agent.get());
  const std::uint64_t after = params_checksum(const_view(agent->parameters()));
  require(before == after, "zero-shot transfer must not update parameters");
  return rep;
}

namespace {

struct Crossing {
  long interactions = 0;
  Money reb_cost_cents = 0;
  Money lost_profit_cents = 0;
  bool reached = false;
};

// First episode e whose forward window of W episodes has mean reward at or
// above the threshold; costs accumulate over episodes before e only.
Crossing find_crossing(const TrainLog& log, double threshold) {
  const std::size_t n = log.episodes.size();
  const std::size_t w = std::min<std::size_t>(10, n);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + log.episodes[i].reward;
  Crossing c;
  for (std::size_t e = 0; e + w <= n; ++e) {
    const double window_mean = (prefix[e + w] - prefix[e]) / static_cast<double>(w);
    if (window_mean >= threshold - 1e-9) {
      c.reached = true;
      c.interactions = e == 0 ? 0 : log.episodes[e - 1].interactions;
      for (std::size_t i = 0; i < e; ++i) {
        c.reb_cost_cents += log.episodes[i].reb_cost_cents;
        c.lost_profit_cents += log.episodes[i].lost_profit_cents;
      }
      return c;
    }
  }
  c.interactions = log.episodes.back().interactions;
  for (const EpisodeRecord& e : log.episodes) {
    c.reb_cost_cents += e.reb_cost_cents;
    c.lost_profit_cents += e.lost_profit_cents;
  }
  return c;
}

}  // namespace

SavingsReport cmd_ledger(const std::string& scratch_metrics, const std::string& finetune_metrics) {
  const TrainLog scratch = load_train_log(scratch_metrics);
  const TrainLog finetune = load_train_log(finetune_metrics);
  if (scratch.scenario_hash != finetune.scenario_hash)
    throw IncomparableLogs("runs were trained on different scenarios");
  if (scratch.episodes.empty() || finetune.episodes.empty())
    throw IncomparableLogs("both runs need online episodes");

  const std::size_t w0 = std::min<std::size_t>(10, finetune.episodes.size());
  double threshold = 0.0;
  for (std::size_t i = 0; i < w0; ++i) threshold += finetune.episodes[i].reward;
  threshold /= static_cast<double>(w0);

  const Crossing s = find_crossing(scratch, threshold);
  const Crossing f = find_crossing(finetune, threshold);

  SavingsReport rep;
  rep.threshold = threshold;
  rep.interactions_saved = s.interactions - f.interactions;
  rep.reb_cost_saved_cents = s.reb_cost_cents - f.reb_cost_cents;
  rep.lost_profit_saved_cents = s.lost_profit_cents - f.lost_profit_cents;
  rep.scratch_reached = s.reached;
  return rep;
}

std::string format_mean_std(double mean, double std) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f(±%.1f)", mean, std);
  return buf;
}

std::string format_report(const ResultReport& report) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-16s %9s %13s %12s %13s %9s\n", "agent", "reward",
                "episodes", "interactions", "reb_cost", "lost_profit", "unserved");
  out << line;
  std::snprintf(line, sizeof line, "%-14s %-16s %9zu %13ld %12.2f %13.2f %9ld\n",
                report.agent.c_str(), format_mean_std(report.mean_reward, report.std_reward).c_str(),
                report.episode_rewards.size(), report.ledger.interactions,
                to_currency(report.ledger.reb_cost_cents),
                to_currency(report.ledger.lost_profit_cents), report.ledger.unserved);
  out << line;
  for (const auto& [seed, mean] : report.per_seed_mean) {
    std::snprintf(line, sizeof line, "  seed %-6llu mean %.2f\n",
                  static_cast<unsigned long long>(seed), mean);
    out << line;
  }
  return out.str();
}

std::string format_savings(const SavingsReport& savings) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "threshold %.2f (fine-tune mean over its first episodes)\n",
                savings.threshold);
  out << line;
  std::snprintf(line, sizeof line, "%-8s %14s %12s %17s\n", "", "Interactions", "Reb. Cost",
                "Unserved demand");
  out << line;
  std::snprintf(line, sizeof line, "%-8s %14ld %12.2f %17.2f\n", "saved",
                savings.interactions_saved, to_currency(savings.reb_cost_saved_cents),
                to_currency(savings.lost_profit_saved_cents));
  out << line;
  if (!savings.scratch_reached)
    out << "note: the from-scratch run never reached the threshold; savings are a lower bound\n";
  return out.str();
}

void write_eval_csv(const ResultReport& report, const std::vector<std::uint64_t>& seeds,
                    int eval_episodes, const std::string& path) {
  require(report.episode_rewards.size() ==
              seeds.size() * static_cast<std::size_t>(eval_episodes),
          "eval csv: reward count does not match seeds x episodes");
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open '" + path + "' for writing");
  out << "episode,seed,reward\n";
  std::size_t idx = 0;
  for (std::uint64_t seed : seeds) {
    for (int e = 0; e < eval_episodes; ++e) {
      char line[96];
      std::snprintf(line, sizeof line, "%d,%llu,%.6f\n", e,
                    static_cast<unsigned long long>(seed), report.episode_rewards[idx++]);
      out << line;
    }
  }
}

void write_curve_csv(const std::vector<TrainLog>& logs, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open '" + path + "' for writing");
  out << "step,seed,reward\n";
  for (const TrainLog& log : logs) {
    for (const EpisodeRecord& e : log.episodes) {
      char line[96];
      std::snprintf(line, sizeof line, "%ld,%llu,%.6f\n", e.interactions,
                    static_cast<unsigned long long>(log.seed), e.reward);
      out << line;
    }
  }
}

double bootstrap_mean_quantile(const std::vector<double>& samples, double q, int resamples,
                               std::uint64_t seed) {
  require(!samples.empty(), "bootstrap needs samples");
  require(resamples > 0, "bootstrap needs resamples > 0");
  const std::size_t n = samples.size();
  Rng rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += samples[static_cast<std::size_t>(rng.uniform_below(static_cast<std::uint64_t>(n)))];
    means[static_cast<std::size_t>(r)] = s / static_cast<double>(n);
  }
  return quantile(std::move(means), q);
}

}  // namespace amod

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "amod/agents.hpp"
#include "amod/baselines.hpp"
#include "amod/dataset.hpp"
#include "amod/env.hpp"

namespace amod {

// Seed streams: one experiment seed fans out into independent substreams so
// training demand, evaluation demand, and controller noise never alias.
// Episode e of a run uses mix_seed(seed, stream, e).
inline constexpr std::uint64_t kTrainStream = 0x7A17;
inline constexpr std::uint64_t kEvalStream = 0xE7A1;
inline constexpr std::uint64_t kControllerStream = 0xC071;

// ---------------------------------------------------------------------------
// The controller matrix: learned agents, heuristics, and MPC.
// ---------------------------------------------------------------------------

enum class AgentKind { Sac, Cql, CalQl, Random, Ed, Greedy, MpcOracle, MpcForecast, None };

AgentKind parse_agent_kind(const std::string& name);
std::string agent_kind_name(AgentKind kind);
bool is_learned(AgentKind kind);  // sac / cql / calql
bool trains_offline(AgentKind kind);  // cql / calql

struct ExperimentConfig {
  std::string scenario_path;
  AgentKind agent = AgentKind::Sac;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{5, 10, 42};
  int eval_episodes = 10;
  std::string out_dir = ".";
  std::string dataset_path;        // offline training / fine-tune mixing
  std::string checkpoint_path;     // eval / transfer / resume
  int episodes = 0;                // online training budget (episodes)
  long grad_steps = 0;             // offline training budget (updates)
  int online_episodes = 0;         // fine-tuning budget after a resume
  double obs_noise_sigma = 0.0;
  int mpc_horizon = 0;             // 0 = scenario plan horizon
  double snapshot_ref = 0.0;       // expert-level reward; > 0 arms M/H snapshots
  int checkpoint_every = 0;        // extra periodic checkpoints; 0 = final only
  int log_every = 100;             // update-record cadence for offline runs
  std::string plan_dump_path;      // debug: JSONL MPC plans during eval

  void validate() const;  // throws ConfigError
};

// Flag-by-flag overlay of a JSON config file; unknown keys are rejected so
// typos fail loudly. Throws ConfigError.
void apply_config_json(ExperimentConfig& cfg, const std::string& path);

// ---------------------------------------------------------------------------
// Episode driving
// ---------------------------------------------------------------------------

struct EpisodeOutcome {
  double reward = 0.0;  // currency units (exact cents, converted once)
  Money reward_cents = 0;
  Money reb_cost_cents = 0;
  Money lost_profit_cents = 0;
  long served = 0;
  long unserved = 0;
  long steps = 0;
};

// One controller decision applied to the environment. Heuristics and agents
// go through the simplex action interface, MPC through explicit flows.
using Stepper = std::function<StepResult(AmodEnv&, Rng&)>;

// `agent` is required for the learned kinds and ignored otherwise. MPC plans
// are appended to `plan_dump` (JSONL) when it is non-null.
Stepper make_stepper(AgentKind kind, Agent* agent, ActionMode mode, int mpc_horizon,
                     double noise_sigma, std::ostream* plan_dump = nullptr);

EpisodeOutcome run_episode(AmodEnv& env, const Stepper& stepper, std::uint64_t episode_seed,
                           Rng& controller_rng);

// ---------------------------------------------------------------------------
// Metrics logs (JSON lines)
// ---------------------------------------------------------------------------

struct EpisodeRecord {
  int episode = 0;
  long interactions = 0;  // cumulative env steps at the end of this episode
  double reward = 0.0;
  Money reb_cost_cents = 0;
  Money lost_profit_cents = 0;
  long served = 0;
  long unserved = 0;
};

struct UpdateRecord {
  long step = 0;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double mean_q = 0.0;
  double cql_gap = 0.0;
  double eta = 0.0;
};

struct TrainLog {
  std::string agent;
  std::uint64_t scenario_hash = 0;
  std::uint64_t seed = 0;
  int episode_len = 0;
  std::vector<EpisodeRecord> episodes;
  std::vector<UpdateRecord> updates;
};

void save_train_log(const TrainLog& log, const std::string& path);
TrainLog load_train_log(const std::string& path);

// ---------------------------------------------------------------------------
// Commands (the CLI is a thin shell over these)
// ---------------------------------------------------------------------------

struct TrainOutput {
  std::vector<TrainLog> logs;                  // one per seed
  std::vector<std::string> checkpoint_paths;   // final checkpoint per seed
  std::vector<std::string> metrics_paths;      // JSONL log per seed
  std::vector<std::string> snapshot_paths;     // M/H threshold snapshots
};

TrainOutput cmd_train(const ExperimentConfig& cfg);

struct LedgerTotals {
  long interactions = 0;
  Money reb_cost_cents = 0;
  Money lost_profit_cents = 0;
  long unserved = 0;
};

struct ResultReport {
  std::string agent;
  std::uint64_t scenario_hash = 0;
  double mean_reward = 0.0;
  double std_reward = 0.0;  // sample standard deviation over pooled episodes
  std::vector<std::pair<std::uint64_t, double>> per_seed_mean;
  std::vector<double> episode_rewards;  // seed-major, eval_episodes per seed
  LedgerTotals ledger;
};

// Net geometry recorded inside a checkpoint file. feat_dim comes from the
// actor input shape and is always available; the rest needs the metadata
// block written by Agent::save_checkpoint.
struct CheckpointInfo {
  int feat_dim = 0;
  bool has_net = false;
  std::string algo;
  int n_stations = 0;
  int hidden_dim = 0;
  std::string critic_variant;
};
CheckpointInfo read_checkpoint_info(const std::string& path);

// Constructs an agent shaped to fit the checkpoint (geometry from the file,
// remaining hyperparameters from train) and loads it, ready for rollouts.
std::unique_ptr<Agent> load_agent_for_rollout(const std::string& checkpoint_path, int n_stations,
                                              int feat_dim, AgentKind kind, TrainConfig train);

ResultReport cmd_eval(const ExperimentConfig& cfg);

// Zero-shot: evaluates cfg.checkpoint_path on cfg.scenario_path without any
// updates (parameter checksum asserted unchanged). Throws
// FeatureWidthMismatch when the checkpoint expects a different feature width.
ResultReport cmd_transfer(const ExperimentConfig& cfg);

struct SavingsReport {
  double threshold = 0.0;          // fine-tune run's starting mean reward
  long interactions_saved = 0;
  Money reb_cost_saved_cents = 0;
  Money lost_profit_saved_cents = 0;
  bool scratch_reached = false;    // whether scratch ever met the threshold
};

// Training-cost comparison between a scratch run and a fine-tuned run on the
// same scenario. A run "reaches" the threshold at the first episode whose
// forward 10-episode mean clears it; costs are summed over earlier episodes.
SavingsReport cmd_ledger(const std::string& scratch_metrics,
                         const std::string& finetune_metrics);

// ---------------------------------------------------------------------------
// Reporting helpers
// ---------------------------------------------------------------------------

std::string format_mean_std(double mean, double std);  // "53.1(±1.1)"
std::string format_report(const ResultReport& report);
std::string format_savings(const SavingsReport& savings);
void write_eval_csv(const ResultReport& report, const std::vector<std::uint64_t>& seeds,
                    int eval_episodes, const std::string& path);
void write_curve_csv(const std::vector<TrainLog>& logs, const std::string& path);

// q-quantile (type 7) of the bootstrap distribution of the sample mean.
double bootstrap_mean_quantile(const std::vector<double>& samples, double q, int resamples,
                               std::uint64_t seed);

}  // namespace amod

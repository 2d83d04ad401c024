#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "amod/dataset.hpp"
#include "amod/nets.hpp"
#include "amod/optim.hpp"

namespace amod {

enum class Algo { Sac, Cql, CalQl };

Algo parse_algo(const std::string& name);
std::string algo_name(Algo algo);

struct TrainConfig {
  int hidden_dim = 16;
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  double gamma = 0.97;
  int buffer_size = 200000;
  int batch_size = 100;
  double entropy_alpha = 0.3;
  double polyak_tau = 0.005;
  int target_update_interval = 1;
  int grad_steps_per_env_step = 1;
  double reward_scale = 0.01;
  // Conservative regularization (CQL / Cal-CQL only).
  double cql_eta = 1.0;
  double cql_threshold_tau = -1.0;  // >= 0 switches on dual gradient descent
  int n_importance_samples = 10;    // per source: uniform and current policy
  double lr_eta = 1e-3;
  double offline_batch_fraction = 0.25;  // fine-tuning mix
  CriticVariant critic_variant = CriticVariant::Critic4;

  // Offline learning rates: actor 1e-4, critic 3e-4.
  static TrainConfig offline_defaults();

  void validate() const;
};

// A stored transition, reward already scaled. ref_value is the scaled
// behavior return for Cal-CQL: -inf disables the calibration floor, NaN
// means the dataset never carried one.
struct BufferEntry {
  Mat obs;
  std::vector<double> action;
  double reward = 0.0;
  Mat next_obs;
  bool done = false;
  double ref_value = 0.0;
};

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;  // E[alpha log pi - min Q]
  double mean_q = 0.0;      // data-action Q, averaged over critics
  double cql_gap = 0.0;     // logsumexp - data term, averaged over critics
  double eta = 0.0;
  double mean_log_prob = 0.0;
};

// Conservative push-down term for one critic on one batch:
//   mean_b[ logsumexp_k(Q~(s_b, a_k) - log rho_{b,k}) - log K ] - mean_b[Q(s_b, a_b^data)]
// where Q~ = max(Q, ref_floor) when a floor is given (Cal-CQL) and rho are
// the proposal densities of the sampled actions. Exposed so the arithmetic
// can be verified against hand-computed values.
NodeId conservative_gap(Tape& t, CriticNet& critic, const CriticNet::Encoding& enc,
                        NodeId q_data, const std::vector<Mat>& sampled_action_cols,
                        const std::vector<std::vector<double>>& log_densities,
                        const Mat* ref_floor);

// Owns the actor, twin critics with Polyak targets, replay buffers, and one
// update rule chosen by `algo`. Single-threaded; all randomness flows from
// the constructor seed.
class Agent {
 public:
  Agent(int n_stations, int feat_dim, Algo algo, const TrainConfig& config,
        std::uint64_t seed);

  std::vector<double> act(const Observation& obs, ActionMode mode);

  // Online transition; applies reward_scale before storing.
  void add_transition(const Observation& obs, const std::vector<double>& action,
                      double reward, const Observation& next_obs, bool done);

  // Ingests a dataset into the offline buffer. When the agent is Cal-CQL the
  // dataset must carry mc_return on every transition.
  void load_offline(const OfflineDataset& dataset);

  // One gradient step: critics, actor, then Polyak targets.
  UpdateStats update();

  // E over offline states, a ~ current policy, of min-twin Q. The
  // conservatism experiments compare this across eta values.
  double mean_policy_q(int samples_per_state, std::uint64_t seed);

  std::size_t online_size() const { return online_.size(); }
  std::size_t offline_size() const { return offline_.size(); }
  long updates_done() const { return updates_; }
  double eta() const;

  ActorNet& actor() { return actor_; }
  CriticNet& critic_a() { return critic_a_; }
  CriticNet& critic_b() { return critic_b_; }
  CriticNet& target_critic_a() { return target_a_; }
  CriticNet& target_critic_b() { return target_b_; }
  const TrainConfig& config() const { return cfg_; }
  Algo algo() const { return algo_; }
  const Mat& adjacency() const { return adj_; }
  int n_stations() const { return n_; }
  int feat_dim() const { return feat_dim_; }
  Rng& rng() { return rng_; }

  std::vector<ParamTensor*> parameters();  // actor + both critics (+ log eta)
  void save_checkpoint(const std::string& path);
  void load_checkpoint(const std::string& path);  // targets reset to online

 private:
  struct Batch {
    std::vector<const BufferEntry*> entries;
    Mat obs;        // (B*N) x F
    Mat next_obs;   // (B*N) x F
    Mat action_col; // (B*N) x 1
    Mat reward;     // B x 1
    Mat not_done;   // B x 1
    Mat ref_floor;  // B x 1 (Cal-CQL)
  };

  Batch sample_batch();
  Mat target_values(const Batch& batch);
  double critic_update(const Batch& batch, UpdateStats& stats);
  void actor_update(const Batch& batch, UpdateStats& stats);

  int n_ = 0, feat_dim_ = 0;
  Algo algo_;
  TrainConfig cfg_;
  Mat adj_;
  Rng rng_;

  ActorNet actor_;
  CriticNet critic_a_, critic_b_;
  CriticNet target_a_, target_b_;
  ParamTensor log_eta_;

  std::deque<BufferEntry> online_;
  std::vector<BufferEntry> offline_;
  long updates_ = 0;
};

}  // namespace amod

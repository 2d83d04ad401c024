#include "amod/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "amod/errors.hpp"

namespace amod {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Mat column_of(const std::vector<double>& v) {
  Mat m(static_cast<int>(v.size()), 1);
  m.v = v;
  return m;
}

}  // namespace

Algo parse_algo(const std::string& name) {
  if (name == "sac") return Algo::Sac;
  if (name == "cql") return Algo::Cql;
  if (name == "calql" || name == "cal-cql") return Algo::CalQl;
  throw UnknownVariant("algorithm " + name);
}

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::Sac: return "sac";
    case Algo::Cql: return "cql";
    case Algo::CalQl: return "calql";
  }
  throw UnknownVariant("bad algorithm enum");
}

TrainConfig TrainConfig::offline_defaults() {
  TrainConfig cfg;
  cfg.lr_actor = 1e-4;
  cfg.lr_critic = 3e-4;
  return cfg;
}

void TrainConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma outside (0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (buffer_size < batch_size) throw ConfigError("buffer_size below batch_size");
  if (entropy_alpha < 0.0) throw ConfigError("entropy_alpha must be >= 0");
  if (!(polyak_tau > 0.0 && polyak_tau <= 1.0))
    throw ConfigError("polyak_tau outside (0, 1]");
  if (target_update_interval < 1)
    throw ConfigError("target_update_interval must be positive");
  if (grad_steps_per_env_step < 1)
    throw ConfigError("grad_steps_per_env_step must be positive");
  if (reward_scale <= 0.0) throw ConfigError("reward_scale must be positive");
  if (cql_eta < 0.0) throw ConfigError("cql_eta must be >= 0");
  if (n_importance_samples < 1)
    throw ConfigError("n_importance_samples must be positive");
  if (offline_batch_fraction < 0.0 || offline_batch_fraction > 1.0)
    throw ConfigError("offline_batch_fraction outside [0, 1]");
  if (hidden_dim < 1) throw ConfigError("hidden_dim must be positive");
  if (lr_actor <= 0.0 || lr_critic <= 0.0 || lr_eta <= 0.0)
    throw ConfigError("learning rates must be positive");
}

NodeId conservative_gap(Tape& t, CriticNet& critic, const CriticNet::Encoding& enc,
                        NodeId q_data, const std::vector<Mat>& sampled_action_cols,
                        const std::vector<std::vector<double>>& log_densities,
                        const Mat* ref_floor) {
  const int k_total = static_cast<int>(sampled_action_cols.size());
  require(k_total >= 1 && log_densities.size() == sampled_action_cols.size(),
          "conservative_gap: need sampled actions with densities");
  const int batch = t.value(q_data).rows;

  NodeId stacked = -1;
  for (int k = 0; k < k_total; ++k) {
    NodeId q = critic.q_from_encoding(t, enc, t.input(sampled_action_cols[k]));
    if (ref_floor != nullptr) q = t.max_with(q, *ref_floor);
    require(static_cast<int>(log_densities[k].size()) == batch,
            "conservative_gap: density column has wrong length");
    Mat neg_log_rho(batch, 1);
    for (int b = 0; b < batch; ++b) neg_log_rho.v[b] = -log_densities[k][b];
    NodeId adjusted = t.add(q, t.input(std::move(neg_log_rho)));
    stacked = (k == 0) ? adjusted : t.col_concat(stacked, adjusted);
  }
  NodeId lse = t.add_const(t.row_logsumexp(stacked), -std::log(k_total));
  return t.sub(t.mean(lse), t.mean(q_data));
}

Agent::Agent(int n_stations, int feat_dim, Algo algo, const TrainConfig& config,
             std::uint64_t seed)
    : n_(n_stations),
      feat_dim_(feat_dim),
      algo_(algo),
      cfg_(config),
      adj_(n_stations, n_stations, 1.0 / n_stations),
      rng_(seed),
      actor_("actor", feat_dim, config.hidden_dim, rng_),
      critic_a_("critic_a", feat_dim, config.hidden_dim, n_stations,
                config.critic_variant, rng_),
      critic_b_("critic_b", feat_dim, config.hidden_dim, n_stations,
                config.critic_variant, rng_),
      target_a_("target_a", feat_dim, config.hidden_dim, n_stations,
                config.critic_variant, rng_),
      target_b_("target_b", feat_dim, config.hidden_dim, n_stations,
                config.critic_variant, rng_),
      log_eta_("cql.log_eta", Mat(1, 1, std::log(std::max(config.cql_eta, 1e-8)))) {
  cfg_.validate();
  require(n_ >= 1, "agent needs at least one station");
  copy_params(target_a_.parameters(), critic_a_.parameters());
  copy_params(target_b_.parameters(), critic_b_.parameters());
}

std::vector<double> Agent::act(const Observation& obs, ActionMode mode) {
  return select_action(actor_, obs, mode, rng_);
}

void Agent::add_transition(const Observation& obs, const std::vector<double>& action,
                           double reward, const Observation& next_obs, bool done) {
  BufferEntry e;
  e.obs = features_of(obs);
  e.action = action;
  e.reward = reward * cfg_.reward_scale;
  e.next_obs = features_of(next_obs);
  e.done = done;
  e.ref_value = kNegInf;  // online data carries no calibration floor
  online_.push_back(std::move(e));
  while (online_.size() > static_cast<std::size_t>(cfg_.buffer_size))
    online_.pop_front();
}

void Agent::load_offline(const OfflineDataset& dataset) {
  require(dataset.meta.n_stations == n_,
          "dataset station count does not match the agent");
  if (dataset.meta.feat_dim != feat_dim_)
    throw FeatureWidthMismatch("dataset feature width " +
                               std::to_string(dataset.meta.feat_dim) +
                               ", agent expects " + std::to_string(feat_dim_));
  offline_.reserve(offline_.size() + dataset.transitions.size());
  for (const Transition& tr : dataset.transitions) {
    if (algo_ == Algo::CalQl && !tr.mc_return)
      throw MissingReferenceValues(
          "Cal-CQL needs mc_return on every transition; run "
          "annotate_reference_values on the dataset first");
    BufferEntry e;
    e.obs = mat_of_grid(tr.obs.node_features);
    e.action = tr.action;
    e.reward = tr.reward * cfg_.reward_scale;
    e.next_obs = mat_of_grid(tr.next_obs.node_features);
    e.done = tr.done;
    e.ref_value = tr.mc_return ? *tr.mc_return * cfg_.reward_scale : kNegInf;
    offline_.push_back(std::move(e));
  }
}

Agent::Batch Agent::sample_batch() {
  if (online_.empty() && offline_.empty())
    throw EmptyBatch("no transitions in either buffer");
  if (online_.size() + offline_.size() < static_cast<std::size_t>(cfg_.batch_size))
    throw EmptyBatch("buffer occupancy " +
                     std::to_string(online_.size() + offline_.size()) +
                     " below batch size " + std::to_string(cfg_.batch_size));
  const int batch_size = cfg_.batch_size;
  int n_offline;
  if (offline_.empty())
    n_offline = 0;
  else if (online_.empty())
    n_offline = batch_size;
  else
    n_offline = std::clamp(
        static_cast<int>(std::lround(cfg_.offline_batch_fraction * batch_size)),
        0, batch_size);

  Batch b;
  b.entries.reserve(batch_size);
  for (int i = 0; i < n_offline; ++i)
    b.entries.push_back(&offline_[rng_.uniform_below(offline_.size())]);
  for (int i = n_offline; i < batch_size; ++i)
    b.entries.push_back(&online_[rng_.uniform_below(online_.size())]);

  b.obs = Mat(batch_size * n_, feat_dim_);
  b.next_obs = Mat(batch_size * n_, feat_dim_);
  b.action_col = Mat(batch_size * n_, 1);
  b.reward = Mat(batch_size, 1);
  b.not_done = Mat(batch_size, 1);
  b.ref_floor = Mat(batch_size, 1);
  for (int i = 0; i < batch_size; ++i) {
    const BufferEntry& e = *b.entries[i];
    require(e.obs.rows == n_ && e.obs.cols == feat_dim_,
            "buffered observation has the wrong shape");
    std::copy(e.obs.v.begin(), e.obs.v.end(),
              b.obs.v.begin() + static_cast<std::size_t>(i) * n_ * feat_dim_);
    std::copy(e.next_obs.v.begin(), e.next_obs.v.end(),
              b.next_obs.v.begin() + static_cast<std::size_t>(i) * n_ * feat_dim_);
    for (int j = 0; j < n_; ++j) b.action_col.v[i * n_ + j] = e.action[j];
    b.reward.v[i] = e.reward;
    b.not_done.v[i] = e.done ? 0.0 : 1.0;
    b.ref_floor.v[i] = e.ref_value;
    if (algo_ == Algo::CalQl && std::isnan(e.ref_value))
      throw MissingReferenceValues("transition without a reference value");
  }
  return b;
}

Mat Agent::target_values(const Batch& batch) {
  const int batch_size = static_cast<int>(batch.entries.size());
  Tape t(false);
  NodeId conc_id = actor_.concentration(t, t.input(batch.next_obs), adj_, n_);
  const Mat& conc = t.value(conc_id);

  Mat next_action_col(batch_size * n_, 1);
  std::vector<double> log_probs(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    std::vector<double> c(conc.v.begin() + static_cast<std::size_t>(i) * n_,
                          conc.v.begin() + static_cast<std::size_t>(i + 1) * n_);
    DirichletDist dist{c};
    auto a = clamp_simplex_interior(dirichlet_sample(dist, rng_));
    log_probs[i] = dirichlet_log_prob(dist, a);
    for (int j = 0; j < n_; ++j) next_action_col.v[i * n_ + j] = a[j];
  }

  NodeId next_in = t.input(batch.next_obs);
  NodeId a_in = t.input(std::move(next_action_col));
  NodeId q1_id = target_a_.q_value(t, next_in, a_in, adj_, n_);
  NodeId q2_id = target_b_.q_value(t, next_in, a_in, adj_, n_);
  const Mat& q1 = t.value(q1_id);
  const Mat& q2 = t.value(q2_id);

  Mat y(batch_size, 1);
  for (int i = 0; i < batch_size; ++i) {
    const double soft_q =
        std::min(q1.v[i], q2.v[i]) - cfg_.entropy_alpha * log_probs[i];
    y.v[i] = batch.reward.v[i] + cfg_.gamma * batch.not_done.v[i] * soft_q;
  }
  return y;
}

double Agent::critic_update(const Batch& batch, UpdateStats& stats) {
  const int batch_size = static_cast<int>(batch.entries.size());
  const Mat y = target_values(batch);
  const double eta_now = eta();
  const bool dual = algo_ != Algo::Sac && cfg_.cql_threshold_tau >= 0.0;
  const bool conservative = algo_ != Algo::Sac && (eta_now != 0.0 || dual);

  Tape t;
  NodeId obs_in = t.input(batch.obs);
  auto enc_a = critic_a_.encode(t, obs_in, adj_, n_);
  auto enc_b = critic_b_.encode(t, obs_in, adj_, n_);
  NodeId a_in = t.input(batch.action_col);
  NodeId q_a = critic_a_.q_from_encoding(t, enc_a, a_in);
  NodeId q_b = critic_b_.q_from_encoding(t, enc_b, a_in);
  NodeId y_in = t.input(y);
  NodeId da = t.sub(q_a, y_in);
  NodeId db = t.sub(q_b, y_in);
  NodeId loss = t.add(t.mean(t.mul(da, da)), t.mean(t.mul(db, db)));

  NodeId mean_qa = t.mean(q_a);
  NodeId mean_qb = t.mean(q_b);
  stats.mean_q = 0.5 * (t.value(mean_qa).v[0] + t.value(mean_qb).v[0]);

  double gap_value = 0.0;
  if (conservative) {
    // Proposal actions: n from the uniform Dirichlet, n from the current
    // policy; densities enter the logsumexp as importance weights.
    const int n_imp = cfg_.n_importance_samples;
    std::vector<Mat> cols;
    std::vector<std::vector<double>> log_rho;
    cols.reserve(2 * n_imp);
    log_rho.reserve(2 * n_imp);

    const std::vector<double> ones(n_, 1.0);
    const double log_uniform_density = std::lgamma(static_cast<double>(n_));
    for (int k = 0; k < n_imp; ++k) {
      Mat col(batch_size * n_, 1);
      for (int i = 0; i < batch_size; ++i) {
        auto x = clamp_simplex_interior(rng_.dirichlet(ones));
        for (int j = 0; j < n_; ++j) col.v[i * n_ + j] = x[j];
      }
      cols.push_back(std::move(col));
      log_rho.emplace_back(batch_size, log_uniform_density);
    }

    Mat policy_conc;
    {
      Tape frozen(false);
      policy_conc = frozen.value(
          actor_.concentration(frozen, frozen.input(batch.obs), adj_, n_));
    }
    for (int k = 0; k < n_imp; ++k) {
      Mat col(batch_size * n_, 1);
      std::vector<double> dens(batch_size);
      for (int i = 0; i < batch_size; ++i) {
        std::vector<double> c(
            policy_conc.v.begin() + static_cast<std::size_t>(i) * n_,
            policy_conc.v.begin() + static_cast<std::size_t>(i + 1) * n_);
        DirichletDist dist{c};
        auto x = clamp_simplex_interior(dirichlet_sample(dist, rng_));
        dens[i] = dirichlet_log_prob(dist, x);
        for (int j = 0; j < n_; ++j) col.v[i * n_ + j] = x[j];
      }
      cols.push_back(std::move(col));
      log_rho.push_back(std::move(dens));
    }

    const Mat* floor_ptr = algo_ == Algo::CalQl ? &batch.ref_floor : nullptr;
    NodeId gap_a = conservative_gap(t, critic_a_, enc_a, q_a, cols, log_rho, floor_ptr);
    NodeId gap_b = conservative_gap(t, critic_b_, enc_b, q_b, cols, log_rho, floor_ptr);
    gap_value = 0.5 * (t.value(gap_a).v[0] + t.value(gap_b).v[0]);
    if (eta_now != 0.0) loss = t.add(loss, t.scale(t.add(gap_a, gap_b), eta_now));
  }

  auto critic_params = critic_a_.parameters();
  {
    auto pb = critic_b_.parameters();
    critic_params.insert(critic_params.end(), pb.begin(), pb.end());
  }
  zero_grads(critic_params);
  t.backward(loss);
  AdamConfig adam;
  adam.lr = cfg_.lr_critic;
  adam_step(critic_params, adam);

  if (dual) {
    // Dual ascent pushes eta up while the gap exceeds the threshold.
    const double eta_val = std::exp(log_eta_.value.v[0]);
    log_eta_.zero_grad();
    log_eta_.grad.v[0] = -(gap_value - cfg_.cql_threshold_tau) * eta_val;
    AdamConfig eta_adam;
    eta_adam.lr = cfg_.lr_eta;
    adam_step({&log_eta_}, eta_adam);
    log_eta_.value.v[0] = std::clamp(log_eta_.value.v[0], -20.0, 20.0);
  }

  stats.cql_gap = gap_value;
  stats.eta = algo_ == Algo::Sac ? 0.0 : eta();
  return t.value(loss).v[0];
}

void Agent::actor_update(const Batch& batch, UpdateStats& stats) {
  const int batch_size = static_cast<int>(batch.entries.size());

  Tape t;
  NodeId conc_id = actor_.concentration(t, t.input(batch.obs), adj_, n_);
  const Mat& conc = t.value(conc_id);

  Mat sampled(batch_size, n_);
  for (int i = 0; i < batch_size; ++i) {
    std::vector<double> c(conc.v.begin() + static_cast<std::size_t>(i) * n_,
                          conc.v.begin() + static_cast<std::size_t>(i + 1) * n_);
    auto x = clamp_simplex_interior(dirichlet_sample(DirichletDist{c}, rng_));
    for (int j = 0; j < n_; ++j) sampled(i, j) = x[j];
  }
  NodeId logp = dirichlet_log_prob_node(t, conc_id, t.input(sampled));
  const Mat& logp_val = t.value(logp);

  Mat min_q(batch_size, 1);
  {
    Tape frozen(false);
    Mat action_col = sampled;
    action_col.rows = batch_size * n_;
    action_col.cols = 1;
    NodeId obs_in = frozen.input(batch.obs);
    NodeId a_in = frozen.input(std::move(action_col));
    NodeId q1_id = critic_a_.q_value(frozen, obs_in, a_in, adj_, n_);
    NodeId q2_id = critic_b_.q_value(frozen, obs_in, a_in, adj_, n_);
    const Mat& q1 = frozen.value(q1_id);
    const Mat& q2 = frozen.value(q2_id);
    for (int i = 0; i < batch_size; ++i) min_q.v[i] = std::min(q1.v[i], q2.v[i]);
  }

  // Score-function gradient with a leave-one-out baseline:
  //   grad = E[(alpha log pi(x) - Q(x) - baseline) * grad log pi(x)].
  std::vector<double> f(batch_size);
  double f_sum = 0.0, logp_sum = 0.0;
  for (int i = 0; i < batch_size; ++i) {
    f[i] = cfg_.entropy_alpha * logp_val.v[i] - min_q.v[i];
    f_sum += f[i];
    logp_sum += logp_val.v[i];
  }
  Mat weights(batch_size, 1);
  for (int i = 0; i < batch_size; ++i) {
    const double baseline =
        batch_size > 1 ? (f_sum - f[i]) / (batch_size - 1) : 0.0;
    weights.v[i] = f[i] - baseline;
  }
  NodeId surrogate = t.mean(t.mul(t.input(std::move(weights)), logp));

  auto actor_params = actor_.parameters();
  zero_grads(actor_params);
  t.backward(surrogate);
  AdamConfig adam;
  adam.lr = cfg_.lr_actor;
  adam_step(actor_params, adam);

  stats.actor_loss = f_sum / batch_size;
  stats.mean_log_prob = logp_sum / batch_size;
}

UpdateStats Agent::update() {
  UpdateStats stats;
  Batch batch = sample_batch();
  stats.critic_loss = critic_update(batch, stats);
  actor_update(batch, stats);
  ++updates_;
  if (updates_ % cfg_.target_update_interval == 0) {
    polyak_update(target_a_.parameters(), critic_a_.parameters(), cfg_.polyak_tau);
    polyak_update(target_b_.parameters(), critic_b_.parameters(), cfg_.polyak_tau);
  }
  return stats;
}

double Agent::mean_policy_q(int samples_per_state, std::uint64_t seed) {
  require(samples_per_state >= 1, "mean_policy_q: need at least one sample");
  if (offline_.empty()) throw EmptyDataset("mean_policy_q needs offline data");
  Rng eval_rng(seed);
  double total = 0.0;
  long count = 0;

  const std::size_t chunk = 512;
  for (std::size_t start = 0; start < offline_.size(); start += chunk) {
    const std::size_t stop = std::min(offline_.size(), start + chunk);
    const int m = static_cast<int>(stop - start);
    Mat obs(m * n_, feat_dim_);
    for (int i = 0; i < m; ++i)
      std::copy(offline_[start + i].obs.v.begin(), offline_[start + i].obs.v.end(),
                obs.v.begin() + static_cast<std::size_t>(i) * n_ * feat_dim_);
    Tape t(false);
    NodeId obs_in = t.input(obs);
    const Mat conc = t.value(actor_.concentration(t, obs_in, adj_, n_));
    auto enc_a = critic_a_.encode(t, obs_in, adj_, n_);
    auto enc_b = critic_b_.encode(t, obs_in, adj_, n_);
    for (int k = 0; k < samples_per_state; ++k) {
      Mat col(m * n_, 1);
      for (int i = 0; i < m; ++i) {
        std::vector<double> c(conc.v.begin() + static_cast<std::size_t>(i) * n_,
                              conc.v.begin() + static_cast<std::size_t>(i + 1) * n_);
        auto x = clamp_simplex_interior(dirichlet_sample(DirichletDist{c}, eval_rng));
        for (int j = 0; j < n_; ++j) col.v[i * n_ + j] = x[j];
      }
      NodeId a_in = t.input(std::move(col));
      NodeId q1_id = critic_a_.q_from_encoding(t, enc_a, a_in);
      NodeId q2_id = critic_b_.q_from_encoding(t, enc_b, a_in);
      const Mat& q1 = t.value(q1_id);
      const Mat& q2 = t.value(q2_id);
      for (int i = 0; i < m; ++i) {
        total += std::min(q1.v[i], q2.v[i]);
        ++count;
      }
    }
  }
  return total / count;
}

double Agent::eta() const {
  if (algo_ == Algo::Sac) return 0.0;
  if (cfg_.cql_threshold_tau >= 0.0) return std::exp(log_eta_.value.v[0]);
  return cfg_.cql_eta;
}

std::vector<ParamTensor*> Agent::parameters() {
  std::vector<ParamTensor*> out = actor_.parameters();
  auto pa = critic_a_.parameters();
  auto pb = critic_b_.parameters();
  out.insert(out.end(), pa.begin(), pa.end());
  out.insert(out.end(), pb.begin(), pb.end());
  if (algo_ != Algo::Sac) out.push_back(&log_eta_);
  return out;
}

void Agent::save_checkpoint(const std::string& path) {
  // Besides the tensors, record the net geometry so a loader can construct a
  // matching agent from the file alone. Readers that predate the block skip it.
  nlohmann::json j = nlohmann::json::parse(params_json_text(const_view(parameters())));
  j["net"] = {{"algo", algo_ == Algo::Sac ? "sac" : algo_ == Algo::Cql ? "cql" : "calql"},
              {"n_stations", n_},
              {"feat_dim", feat_dim_},
              {"hidden_dim", cfg_.hidden_dim},
              {"critic_variant", critic_variant_name(cfg_.critic_variant)}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

void Agent::load_checkpoint(const std::string& path) {
  load_params(parameters(), path);
  copy_params(target_a_.parameters(), critic_a_.parameters());
  copy_params(target_b_.parameters(), critic_b_.parameters());
}

}  // namespace amod

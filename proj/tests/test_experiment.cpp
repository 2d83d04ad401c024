#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "amod/dataset.hpp"
#include "amod/errors.hpp"
#include "amod/experiment.hpp"
#include "amod/scenario.hpp"

using namespace amod;

namespace {

// Every artifact of one test lives in its own directory so tests cannot
// collide and nothing leaks into the build tree.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag)
      : path(std::filesystem::path("tmp_exp_" + tag)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Scenario small_scenario(int episode_len = 8, int plan_horizon = 3) {
  SynthSpec spec;
  spec.n_stations = 3;
  spec.fleet_size = 9;
  spec.mean_rate = 0.8;
  spec.episode_len = episode_len;
  spec.plan_horizon = plan_horizon;
  spec.max_travel_steps = 2;
  return make_synthetic_scenario(spec, 11);
}

std::string write_scenario(const TempDir& dir, const Scenario& scn,
                           const std::string& name = "scn.json") {
  const std::string path = dir.file(name);
  save_scenario(scn, path);
  return path;
}

bool reports_equal(const ResultReport& a, const ResultReport& b) {
  return a.agent == b.agent && a.scenario_hash == b.scenario_hash &&
         a.mean_reward == b.mean_reward && a.std_reward == b.std_reward &&
         a.per_seed_mean == b.per_seed_mean && a.episode_rewards == b.episode_rewards &&
         a.ledger.interactions == b.ledger.interactions &&
         a.ledger.reb_cost_cents == b.ledger.reb_cost_cents &&
         a.ledger.lost_profit_cents == b.ledger.lost_profit_cents &&
         a.ledger.unserved == b.ledger.unserved;
}

TrainLog synthetic_log(std::uint64_t hash, std::uint64_t seed,
                       const std::vector<double>& rewards, int episode_len = 10,
                       Money reb_cost_each = 50) {
  TrainLog log;
  log.agent = "sac";
  log.scenario_hash = hash;
  log.seed = seed;
  log.episode_len = episode_len;
  for (std::size_t e = 0; e < rewards.size(); ++e) {
    EpisodeRecord rec;
    rec.episode = static_cast<int>(e);
    rec.interactions = static_cast<long>((e + 1) * episode_len);
    rec.reward = rewards[e];
    rec.reb_cost_cents = reb_cost_each;
    rec.lost_profit_cents = 2 * reb_cost_each;
    rec.served = 5;
    rec.unserved = 1;
    log.episodes.push_back(rec);
  }
  return log;
}

}  // namespace

TEST_CASE("agent kinds parse and print consistently") {
  const std::vector<AgentKind> kinds = {
      AgentKind::Sac,    AgentKind::Cql,       AgentKind::CalQl,
      AgentKind::Random, AgentKind::Ed,        AgentKind::Greedy,
      AgentKind::MpcOracle, AgentKind::MpcForecast, AgentKind::None};
  for (AgentKind k : kinds) CHECK(parse_agent_kind(agent_kind_name(k)) == k);
  CHECK(parse_agent_kind("cal-ql") == AgentKind::CalQl);
  CHECK(parse_agent_kind("equal") == AgentKind::Ed);
  CHECK_THROWS_AS(parse_agent_kind("dqn"), ConfigError);

  CHECK(is_learned(AgentKind::Sac));
  CHECK(is_learned(AgentKind::CalQl));
  CHECK_FALSE(is_learned(AgentKind::MpcOracle));
  CHECK(trains_offline(AgentKind::Cql));
  CHECK_FALSE(trains_offline(AgentKind::Sac));
}

TEST_CASE("config validation rejects bad values") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("seeds") {
    cfg.seeds.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("eval episodes") {
    cfg.eval_episodes = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("noise") {
    cfg.obs_noise_sigma = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("log cadence") {
    cfg.log_every = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("train config errors surface as config errors") {
    cfg.train.gamma = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("json config overlay sets fields and rejects unknown keys") {
  TempDir dir("config");
  const std::string path = dir.file("cfg.json");
  {
    std::ofstream out(path);
    out << R"({"agent": "cql", "seeds": [1, 2, 3], "eval_episodes": 4,
               "episodes": 7, "steps": 250, "obs_noise_sigma": 0.25,
               "snapshot_ref": 55.5, "dataset": "d.jsonl",
               "train": {"hidden_dim": 8, "lr_actor": 0.0005, "cql_eta": 2.5,
                         "critic_variant": "critic3v2"}})";
  }
  ExperimentConfig cfg;
  apply_config_json(cfg, path);
  CHECK(cfg.agent == AgentKind::Cql);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.eval_episodes == 4);
  CHECK(cfg.episodes == 7);
  CHECK(cfg.grad_steps == 250);
  CHECK(cfg.obs_noise_sigma == doctest::Approx(0.25));
  CHECK(cfg.snapshot_ref == doctest::Approx(55.5));
  CHECK(cfg.dataset_path == "d.jsonl");
  CHECK(cfg.train.hidden_dim == 8);
  CHECK(cfg.train.lr_actor == doctest::Approx(5e-4));
  CHECK(cfg.train.cql_eta == doctest::Approx(2.5));
  CHECK(cfg.train.critic_variant == CriticVariant::Critic3v2);

  const std::string bad = dir.file("bad.json");
  {
    std::ofstream out(bad);
    out << R"({"lr_actor": 0.1})";  // train key at the top level
  }
  ExperimentConfig fresh;
  CHECK_THROWS_AS(apply_config_json(fresh, bad), ConfigError);

  const std::string bad_train = dir.file("bad_train.json");
  {
    std::ofstream out(bad_train);
    out << R"({"train": {"momentum": 0.9}})";
  }
  CHECK_THROWS_AS(apply_config_json(fresh, bad_train), ConfigError);

  const std::string not_obj = dir.file("arr.json");
  {
    std::ofstream out(not_obj);
    out << "[1, 2]";
  }
  CHECK_THROWS_AS(apply_config_json(fresh, not_obj), ConfigError);
  CHECK_THROWS_AS(apply_config_json(fresh, dir.file("missing.json")), ConfigError);
}

TEST_CASE("train log round-trips through jsonl exactly") {
  TempDir dir("log");
  TrainLog log = synthetic_log(123456789ULL, 42, {10.25, -3.5, 7.125});
  log.updates.push_back(UpdateRecord{100, 0.5, -1.25, 3.375, 0.875, 5.0});
  log.updates.push_back(UpdateRecord{200, 0.25, -1.5, 3.5, 0.75, 4.5});

  const std::string path = dir.file("metrics.jsonl");
  save_train_log(log, path);
  const TrainLog back = load_train_log(path);
  CHECK(back.agent == log.agent);
  CHECK(back.scenario_hash == log.scenario_hash);
  CHECK(back.seed == log.seed);
  CHECK(back.episode_len == log.episode_len);
  REQUIRE(back.episodes.size() == log.episodes.size());
  for (std::size_t i = 0; i < log.episodes.size(); ++i) {
    CHECK(back.episodes[i].episode == log.episodes[i].episode);
    CHECK(back.episodes[i].interactions == log.episodes[i].interactions);
    CHECK(back.episodes[i].reward == log.episodes[i].reward);
    CHECK(back.episodes[i].reb_cost_cents == log.episodes[i].reb_cost_cents);
    CHECK(back.episodes[i].lost_profit_cents == log.episodes[i].lost_profit_cents);
    CHECK(back.episodes[i].served == log.episodes[i].served);
    CHECK(back.episodes[i].unserved == log.episodes[i].unserved);
  }
  REQUIRE(back.updates.size() == 2);
  CHECK(back.updates[1].step == 200);
  CHECK(back.updates[1].mean_q == 3.5);
  CHECK(back.updates[1].eta == 4.5);

  SUBCASE("future format version is rejected") {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    std::string rest((std::istreambuf_iterator<char>(in)), {});
    const std::string bumped = dir.file("bumped.jsonl");
    std::ofstream out(bumped);
    std::string line = first;
    const auto pos = line.find("\"version\":1");
    REQUIRE(pos != std::string::npos);
    line.replace(pos, 11, "\"version\":9");
    out << line << "\n" << rest;
    out.close();
    CHECK_THROWS_AS(load_train_log(bumped), VersionMismatch);
  }
  SUBCASE("garbage line is a parse error") {
    std::ofstream out(path, std::ios::app);
    out << "{not json\n";
    out.close();
    CHECK_THROWS_AS(load_train_log(path), ParseError);
  }
  SUBCASE("missing meta header is a parse error") {
    const std::string no_meta = dir.file("nometa.jsonl");
    std::ofstream out(no_meta);
    out << R"({"kind":"episode","episode":0,"interactions":1,"reward":0.0,)"
        << R"("reb_cost_cents":0,"lost_profit_cents":0,"served":0,"unserved":0})" << "\n";
    out.close();
    CHECK_THROWS_AS(load_train_log(no_meta), ParseError);
  }
}

TEST_CASE("run_episode is reproducible and consistent with the env") {
  const Scenario scn = small_scenario();
  AmodEnv env(scn, 0.0);
  const Stepper ed = make_stepper(AgentKind::Ed, nullptr, ActionMode::Mean, 0, 0.0);
  Rng ctl_a(7);
  const EpisodeOutcome a = run_episode(env, ed, 99, ctl_a);
  Rng ctl_b(7);
  const EpisodeOutcome b = run_episode(env, ed, 99, ctl_b);
  CHECK(a.reward_cents == b.reward_cents);
  CHECK(a.reb_cost_cents == b.reb_cost_cents);
  CHECK(a.lost_profit_cents == b.lost_profit_cents);
  CHECK(a.served == b.served);
  CHECK(a.steps == scn.episode_len);
  CHECK(a.reward == doctest::Approx(to_currency(a.reward_cents)));

  // The controller stream matters for stochastic controllers.
  const Stepper rnd = make_stepper(AgentKind::Random, nullptr, ActionMode::Mean, 0, 0.0);
  Rng ctl_c(7);
  Rng ctl_d(8);
  const EpisodeOutcome c = run_episode(env, rnd, 99, ctl_c);
  const EpisodeOutcome d = run_episode(env, rnd, 99, ctl_d);
  CHECK(c.reb_cost_cents != d.reb_cost_cents);

  CHECK_THROWS(make_stepper(AgentKind::Sac, nullptr, ActionMode::Mean, 0, 0.0));
}

TEST_CASE("cmd_eval is deterministic and fills the ledger") {
  TempDir dir("eval");
  const Scenario scn = small_scenario();
  ExperimentConfig cfg;
  cfg.scenario_path = write_scenario(dir, scn);
  cfg.agent = AgentKind::Ed;
  cfg.seeds = {1, 2};
  cfg.eval_episodes = 3;

  const ResultReport a = cmd_eval(cfg);
  const ResultReport b = cmd_eval(cfg);
  CHECK(reports_equal(a, b));
  CHECK(a.agent == "ed");
  CHECK(a.scenario_hash == scenario_hash(scn));
  REQUIRE(a.episode_rewards.size() == 6);
  REQUIRE(a.per_seed_mean.size() == 2);
  CHECK(a.ledger.interactions == 2 * 3 * scn.episode_len);
  CHECK(a.ledger.reb_cost_cents >= 0);
  CHECK(a.ledger.unserved >= 0);

  // Per-seed means recompute from the episode rewards in seed-major order.
  for (std::size_t s = 0; s < 2; ++s) {
    double sum = 0.0;
    for (int e = 0; e < 3; ++e) sum += a.episode_rewards[s * 3 + e];
    CHECK(a.per_seed_mean[s].second == doctest::Approx(sum / 3.0));
  }

  // Same seeds, different controller: MPC oracle shares the demand draws.
  ExperimentConfig mpc = cfg;
  mpc.agent = AgentKind::MpcOracle;
  const ResultReport m = cmd_eval(mpc);
  CHECK(m.episode_rewards.size() == 6);
  CHECK(m.mean_reward >= a.mean_reward - 1e-9);  // oracle planning beats blind spreading here

  ExperimentConfig missing = cfg;
  missing.scenario_path.clear();
  CHECK_THROWS_AS(cmd_eval(missing), ConfigError);
  ExperimentConfig learned = cfg;
  learned.agent = AgentKind::Sac;
  CHECK_THROWS_AS(cmd_eval(learned), ConfigError);  // no checkpoint given
}

TEST_CASE("cmd_train online: metrics, checkpoints, snapshots, determinism") {
  TempDir dir("train");
  const Scenario scn = small_scenario();
  ExperimentConfig cfg;
  cfg.scenario_path = write_scenario(dir, scn);
  cfg.agent = AgentKind::Sac;
  cfg.seeds = {5};
  cfg.episodes = 4;
  cfg.out_dir = dir.file("run");
  cfg.train.hidden_dim = 4;
  cfg.train.batch_size = 16;
  cfg.snapshot_ref = -1.0;  // validate() rejects this
  CHECK_THROWS_AS(cmd_train(cfg), ConfigError);
  cfg.snapshot_ref = 1.0;  // tiny reference: both snapshots fire on episode one

  const TrainOutput out = cmd_train(cfg);
  REQUIRE(out.logs.size() == 1);
  const TrainLog& log = out.logs[0];
  CHECK(log.agent == "sac");
  CHECK(log.scenario_hash == scenario_hash(scn));
  CHECK(log.episode_len == scn.episode_len);
  REQUIRE(log.episodes.size() == 4);
  for (int e = 0; e < 4; ++e) {
    CHECK(log.episodes[e].episode == e);
    CHECK(log.episodes[e].interactions == (e + 1) * scn.episode_len);
  }
  CHECK(log.updates.empty());

  REQUIRE(out.metrics_paths.size() == 1);
  const TrainLog reloaded = load_train_log(out.metrics_paths[0]);
  CHECK(reloaded.episodes.size() == 4);
  CHECK(reloaded.episodes[3].reward == log.episodes[3].reward);

  REQUIRE(out.checkpoint_paths.size() == 1);
  CHECK(std::filesystem::exists(out.checkpoint_paths[0]));
  REQUIRE(out.snapshot_paths.size() == 2);  // -M and -H
  CHECK(out.snapshot_paths[0].find("-M.json") != std::string::npos);
  CHECK(out.snapshot_paths[1].find("-H.json") != std::string::npos);

  // The snapshot from episode one differs from the final checkpoint.
  std::ifstream snap(out.snapshot_paths[0]), fin(out.checkpoint_paths[0]);
  std::string snap_s((std::istreambuf_iterator<char>(snap)), {});
  std::string fin_s((std::istreambuf_iterator<char>(fin)), {});
  CHECK(snap_s != fin_s);

  // Same config, fresh directory: byte-identical metrics.
  ExperimentConfig cfg2 = cfg;
  cfg2.out_dir = dir.file("run2");
  const TrainOutput out2 = cmd_train(cfg2);
  std::ifstream m1(out.metrics_paths[0]), m2(out2.metrics_paths[0]);
  std::string s1((std::istreambuf_iterator<char>(m1)), {});
  std::string s2((std::istreambuf_iterator<char>(m2)), {});
  CHECK(s1 == s2);

  // The final checkpoint evaluates through cmd_eval with no hyperparameters
  // repeated: the file itself records hidden width and critic variant.
  const CheckpointInfo info = read_checkpoint_info(out.checkpoint_paths[0]);
  CHECK(info.has_net);
  CHECK(info.algo == "sac");
  CHECK(info.hidden_dim == 4);
  CHECK(info.n_stations == 3);
  CHECK(info.feat_dim == 2 * scn.plan_horizon + 2);
  ExperimentConfig ev;
  ev.scenario_path = cfg.scenario_path;
  ev.agent = AgentKind::Sac;
  ev.seeds = {1};
  ev.eval_episodes = 2;
  ev.checkpoint_path = out.checkpoint_paths[0];
  const ResultReport rep = cmd_eval(ev);
  CHECK(rep.episode_rewards.size() == 2);
}

TEST_CASE("cmd_train offline and fine-tuning paths") {
  TempDir dir("offline");
  const Scenario scn = small_scenario();
  const std::string scn_path = write_scenario(dir, scn);

  AmodEnv env(scn, 0.0);
  const PolicyFn behavior = [](const Observation& o) { return equal_distribution_policy(o); };
  OfflineDataset ds = collect_dataset(env, behavior, 120, 3, "E");
  annotate_reference_values(ds, 0.97);
  const std::string ds_path = dir.file("ds.jsonl");
  save_dataset(ds, ds_path);

  ExperimentConfig cfg;
  cfg.agent = AgentKind::Cql;
  cfg.seeds = {5};
  cfg.dataset_path = ds_path;
  cfg.grad_steps = 40;
  cfg.log_every = 10;
  cfg.out_dir = dir.file("cql");
  cfg.train.hidden_dim = 4;
  cfg.train.batch_size = 16;
  cfg.train.n_importance_samples = 3;

  const TrainOutput out = cmd_train(cfg);
  REQUIRE(out.logs.size() == 1);
  CHECK(out.logs[0].episodes.empty());  // zero env interactions offline
  REQUIRE(out.logs[0].updates.size() == 4);
  CHECK(out.logs[0].updates[0].step == 10);
  CHECK(out.logs[0].updates[3].step == 40);
  CHECK(out.logs[0].scenario_hash == ds.meta.scenario_hash);

  SUBCASE("offline training requires a dataset and steps") {
    ExperimentConfig bad = cfg;
    bad.dataset_path.clear();
    CHECK_THROWS_AS(cmd_train(bad), ConfigError);
    bad = cfg;
    bad.grad_steps = 0;
    CHECK_THROWS_AS(cmd_train(bad), ConfigError);
  }
  SUBCASE("heuristics do not train") {
    ExperimentConfig bad = cfg;
    bad.agent = AgentKind::Greedy;
    CHECK_THROWS_AS(cmd_train(bad), ConfigError);
  }
  SUBCASE("sac training needs episodes, not steps") {
    ExperimentConfig bad;
    bad.agent = AgentKind::Sac;
    bad.scenario_path = scn_path;
    bad.grad_steps = 10;
    bad.out_dir = dir.file("sacbad");
    CHECK_THROWS_AS(cmd_train(bad), ConfigError);
  }

  SUBCASE("fine-tuning resumes a checkpoint and mixes the dataset") {
    ExperimentConfig cal = cfg;
    cal.agent = AgentKind::CalQl;
    cal.out_dir = dir.file("cal");
    const TrainOutput pre = cmd_train(cal);

    ExperimentConfig ft = cal;
    ft.scenario_path = scn_path;
    ft.checkpoint_path = pre.checkpoint_paths[0];
    ft.online_episodes = 2;
    ft.grad_steps = 0;
    ft.out_dir = dir.file("ft");
    const TrainOutput tuned = cmd_train(ft);
    REQUIRE(tuned.logs.size() == 1);
    CHECK(tuned.logs[0].episodes.size() == 2);
    CHECK(tuned.logs[0].scenario_hash == scenario_hash(scn));

    ExperimentConfig bad = ft;
    bad.dataset_path.clear();
    CHECK_THROWS_AS(cmd_train(bad), ConfigError);  // mix requires the dataset
    bad = ft;
    bad.agent = AgentKind::Cql;
    CHECK_THROWS_AS(cmd_train(bad), ConfigError);  // resuming is a calql move
    bad = ft;
    bad.online_episodes = 0;
    CHECK_THROWS_AS(cmd_train(bad), ConfigError);
  }
}

TEST_CASE("cmd_transfer: identity run matches eval, width mismatch rejected") {
  TempDir dir("transfer");
  const Scenario scn = small_scenario(8, 3);
  ExperimentConfig train_cfg;
  train_cfg.scenario_path = write_scenario(dir, scn);
  train_cfg.agent = AgentKind::Sac;
  train_cfg.seeds = {5};
  train_cfg.episodes = 2;
  train_cfg.out_dir = dir.file("run");
  train_cfg.train.hidden_dim = 4;
  train_cfg.train.batch_size = 16;
  const TrainOutput out = cmd_train(train_cfg);

  ExperimentConfig ev;
  ev.scenario_path = train_cfg.scenario_path;
  ev.agent = AgentKind::Sac;
  ev.seeds = {1, 2};
  ev.eval_episodes = 2;
  ev.checkpoint_path = out.checkpoint_paths[0];
  const ResultReport base = cmd_eval(ev);
  const ResultReport moved = cmd_transfer(ev);
  CHECK(reports_equal(base, moved));

  // A different station count with the same horizon transfers.
  SynthSpec spec5;
  spec5.n_stations = 5;
  spec5.fleet_size = 15;
  spec5.episode_len = 8;
  spec5.plan_horizon = 3;
  spec5.max_travel_steps = 2;
  const Scenario scn5 = make_synthetic_scenario(spec5, 21);
  ExperimentConfig tr5 = ev;
  tr5.scenario_path = write_scenario(dir, scn5, "scn5.json");
  const ResultReport rep5 = cmd_transfer(tr5);
  CHECK(rep5.episode_rewards.size() == 4);
  CHECK(rep5.scenario_hash == scenario_hash(scn5));

  // A different plan horizon changes the feature width and is rejected.
  const Scenario wide = small_scenario(8, 5);
  ExperimentConfig bad = ev;
  bad.scenario_path = write_scenario(dir, wide, "wide.json");
  CHECK_THROWS_AS(cmd_transfer(bad), FeatureWidthMismatch);

  ExperimentConfig no_ckpt = ev;
  no_ckpt.checkpoint_path.clear();
  CHECK_THROWS_AS(cmd_transfer(no_ckpt), ConfigError);
  ExperimentConfig heur = ev;
  heur.agent = AgentKind::Greedy;
  CHECK_THROWS_AS(cmd_transfer(heur), ConfigError);
}

TEST_CASE("cmd_ledger: crossing arithmetic and guards") {
  TempDir dir("ledger");

  SUBCASE("identical runs save nothing") {
    const TrainLog log = synthetic_log(777, 1, {5, 6, 7, 8, 9, 10, 11, 12});
    const std::string a = dir.file("a.jsonl"), b = dir.file("b.jsonl");
    save_train_log(log, a);
    save_train_log(log, b);
    const SavingsReport rep = cmd_ledger(a, b);
    CHECK(rep.interactions_saved == 0);
    CHECK(rep.reb_cost_saved_cents == 0);
    CHECK(rep.lost_profit_saved_cents == 0);
    CHECK(rep.scratch_reached);
    CHECK(rep.threshold == doctest::Approx(8.5));  // mean of all 8 episodes
  }

  SUBCASE("late crossing pays for every episode before it") {
    // Fine-tune opens at reward 10; scratch spends 10 warm-up episodes at 0.
    std::vector<double> ft_r(12, 10.0);
    std::vector<double> scratch_r(10, 0.0);
    scratch_r.insert(scratch_r.end(), 12, 10.0);
    const TrainLog ft = synthetic_log(777, 1, ft_r, 10, 50);
    const TrainLog scratch = synthetic_log(777, 2, scratch_r, 10, 50);
    const std::string a = dir.file("scratch.jsonl"), b = dir.file("ft.jsonl");
    save_train_log(scratch, a);
    save_train_log(ft, b);
    const SavingsReport rep = cmd_ledger(a, b);
    CHECK(rep.threshold == doctest::Approx(10.0));
    CHECK(rep.interactions_saved == 100);        // ten episodes of ten steps
    CHECK(rep.reb_cost_saved_cents == 10 * 50);  // their rebalancing spend
    CHECK(rep.lost_profit_saved_cents == 10 * 100);
    CHECK(rep.scratch_reached);
  }

  SUBCASE("scratch never catching up reports total cost as a lower bound") {
    const TrainLog ft = synthetic_log(777, 1, std::vector<double>(10, 10.0));
    const TrainLog scratch = synthetic_log(777, 2, std::vector<double>(15, 1.0));
    const std::string a = dir.file("s2.jsonl"), b = dir.file("f2.jsonl");
    save_train_log(scratch, a);
    save_train_log(ft, b);
    const SavingsReport rep = cmd_ledger(a, b);
    CHECK_FALSE(rep.scratch_reached);
    CHECK(rep.interactions_saved == 150);
  }

  SUBCASE("logs from different scenarios are incomparable") {
    const TrainLog x = synthetic_log(1, 1, {1, 2});
    const TrainLog y = synthetic_log(2, 1, {1, 2});
    const std::string a = dir.file("x.jsonl"), b = dir.file("y.jsonl");
    save_train_log(x, a);
    save_train_log(y, b);
    CHECK_THROWS_AS(cmd_ledger(a, b), IncomparableLogs);
  }

  SUBCASE("offline-only logs have no episodes to compare") {
    TrainLog x = synthetic_log(1, 1, {});
    x.updates.push_back(UpdateRecord{10, 0, 0, 0, 0, 0});
    const TrainLog y = synthetic_log(1, 1, {1, 2});
    const std::string a = dir.file("ox.jsonl"), b = dir.file("oy.jsonl");
    save_train_log(x, a);
    save_train_log(y, b);
    CHECK_THROWS_AS(cmd_ledger(a, b), IncomparableLogs);
  }
}

TEST_CASE("report formatting") {
  CHECK(format_mean_std(53.07, 1.14) == "53.1(±1.1)");
  CHECK(format_mean_std(-2.26, 0.0) == "-2.3(±0.0)");
  CHECK(format_mean_std(100.0, 12.35) == "100.0(±12.3)");

  ResultReport rep;
  rep.agent = "ed";
  rep.scenario_hash = 1;
  rep.mean_reward = 10.0;
  rep.std_reward = 2.0;
  rep.episode_rewards = {8.0, 12.0};
  rep.per_seed_mean = {{5, 10.0}};
  rep.ledger.interactions = 20;
  rep.ledger.reb_cost_cents = 1234;
  rep.ledger.lost_profit_cents = 5678;
  rep.ledger.unserved = 3;
  const std::string text = format_report(rep);
  CHECK(text.find("ed") != std::string::npos);
  CHECK(text.find("10.0(±2.0)") != std::string::npos);
  CHECK(text.find("12.34") != std::string::npos);
  CHECK(text.find("56.78") != std::string::npos);
  CHECK(text.find("seed 5") != std::string::npos);

  SavingsReport sav;
  sav.threshold = 42.0;
  sav.interactions_saved = 5000;
  sav.reb_cost_saved_cents = 12345;
  sav.lost_profit_saved_cents = 6789;
  sav.scratch_reached = true;
  const std::string s = format_savings(sav);
  CHECK(s.find("Interactions") != std::string::npos);
  CHECK(s.find("5000") != std::string::npos);
  CHECK(s.find("123.45") != std::string::npos);
  CHECK(s.find("lower bound") == std::string::npos);
  sav.scratch_reached = false;
  CHECK(format_savings(sav).find("lower bound") != std::string::npos);
}

TEST_CASE("csv writers") {
  TempDir dir("csv");
  ResultReport rep;
  rep.episode_rewards = {1.5, 2.5, 3.5, 4.5};
  const std::string path = dir.file("eval.csv");
  write_eval_csv(rep, {7, 9}, 2, path);
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text ==
        "episode,seed,reward\n0,7,1.500000\n1,7,2.500000\n0,9,3.500000\n1,9,4.500000\n");
  CHECK_THROWS(write_eval_csv(rep, {7}, 3, path));  // 4 rewards != 1 seed x 3 episodes

  const TrainLog log = synthetic_log(1, 11, {1.0, 2.0}, 10);
  const std::string curve = dir.file("curve.csv");
  write_curve_csv({log}, curve);
  std::ifstream cin_(curve);
  std::string ctext((std::istreambuf_iterator<char>(cin_)), {});
  CHECK(ctext == "step,seed,reward\n10,11,1.000000\n20,11,2.000000\n");
}

TEST_CASE("bootstrap quantile of the mean") {
  // Constant samples: every resampled mean is the constant.
  const std::vector<double> constant(20, 4.25);
  CHECK(bootstrap_mean_quantile(constant, 0.05, 200, 1) == doctest::Approx(4.25));
  CHECK(bootstrap_mean_quantile(constant, 0.95, 200, 1) == doctest::Approx(4.25));

  // Clearly positive gaps keep the whole bootstrap distribution positive.
  const std::vector<double> gaps = {3.0, 2.5, 4.0, 3.5, 2.0, 5.0, 3.0, 2.8};
  CHECK(bootstrap_mean_quantile(gaps, 0.05, 500, 2) > 0.0);

  // Mixed-sign samples straddle zero at the tails.
  const std::vector<double> mixed = {-5.0, 5.0, -4.0, 4.0, -3.0, 3.0};
  CHECK(bootstrap_mean_quantile(mixed, 0.05, 500, 3) < 0.0);
  CHECK(bootstrap_mean_quantile(mixed, 0.95, 500, 3) > 0.0);

  // Deterministic in the seed, monotone in q.
  CHECK(bootstrap_mean_quantile(gaps, 0.05, 300, 7) ==
        bootstrap_mean_quantile(gaps, 0.05, 300, 7));
  CHECK(bootstrap_mean_quantile(gaps, 0.05, 300, 7) <=
        bootstrap_mean_quantile(gaps, 0.5, 300, 7));
  CHECK_THROWS(bootstrap_mean_quantile({}, 0.05, 10, 1));
}

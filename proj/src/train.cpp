#include "ecrl/train.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ecrl/reports.hpp"

namespace ecrl::harness {

namespace fs = std::filesystem;

Vec obs_scales_for(const ExperimentConfig& cfg) {
  if (cfg.env_kind == "biped") return env::BipedEnv::obs_scales();
  return Vec::Ones(2);
}

checkpoint::PolicyCheckpoint make_policy_checkpoint(const ExperimentConfig& cfg,
                                                    const ActorCritic& ac) {
  checkpoint::PolicyCheckpoint ckpt;
  ckpt.pi = ac.pi;
  ckpt.critic_net = ac.critic.value_net;
  ckpt.obs_scales = obs_scales_for(cfg);
  auto probe = cfg.make_env(0);
  ckpt.obs_frames = probe->obs_frames();
  ckpt.priv_frames = probe->priv_frames();
  return ckpt;
}

namespace {

std::string iter_checkpoint_name(int iteration) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "policy_iter_%05d.json", iteration);
  return buf;
}

void save_checkpoint(const ExperimentConfig& cfg, const ActorCritic& ac,
                     const std::string& path) {
  checkpoint::save_file(path, checkpoint::policy_to_json(make_policy_checkpoint(cfg, ac)));
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                  const StopFn& stop, const IterHook& hook) {
  cfg.validate();
  const TrainingConfig& tc = cfg.training;
  const optimizers::OptimizerConfig& opt = cfg.optimizer;

  std::vector<std::unique_ptr<env::Env>> envs;
  envs.reserve(static_cast<std::size_t>(tc.num_envs));
  for (int e = 0; e < tc.num_envs; ++e)
    envs.push_back(cfg.make_env(Rng::derive(seed, 1000 + static_cast<std::uint64_t>(e))));

  const int obs_dim = envs.front()->obs_frames() * envs.front()->obs_frame_dim();
  const int priv_dim = envs.front()->priv_frames() * envs.front()->priv_frame_dim();
  const int n_act = envs.front()->action_dim();

  Rng net_rng(Rng::derive(seed, 1));
  Rng update_rng(Rng::derive(seed, 2));

  auto pi = policy::GaussianPolicy::make(obs_dim, tc.actor_hidden, n_act, tc.activation,
                                         tc.init_log_std, net_rng);
  auto critic = policy::RewardCritic::make(priv_dim, tc.critic_hidden, tc.activation, net_rng);
  ActorCritic ac = ActorCritic::make(std::move(pi), std::move(critic), opt.actor_lr,
                                     opt.critic_lr);
  LagrangeState lag =
      LagrangeState::make(static_cast<int>(cfg.constraints.size()), opt.lambda_lr);

  Collector collector(std::move(envs), cfg.constraints, tc.gamma_reward, tc.gae_lambda,
                      tc.reward_scale, tc.episode_stat_window, Rng::derive(seed, 3));

  TrainResult result;
  result.record.algorithm = optimizers::algo_name(opt.algo);
  result.record.seed = seed;

  std::ofstream metrics_os, timing_os;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    metrics_os.open(out_dir + "/metrics.csv", std::ios::binary);
    if (!metrics_os) throw std::runtime_error("cannot write metrics.csv in " + out_dir);
    metrics_os << metrics_csv_header(static_cast<int>(cfg.constraints.size()));
    timing_os.open(out_dir + "/timing.log", std::ios::binary);
  }

  try {
    for (int it = 0; it < tc.iterations; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      const double mu_e = opt.algo == Algo::PPO ? opt.mu_e : 0.0;
      const optimizers::UpdateBatch batch =
          collector.collect(ac.pi, ac.critic, tc.steps_per_env, mu_e);
      const LossBreakdown lb =
          optimizers::update_iteration(batch, opt, cfg.constraints, lag, ac, update_rng);

      IterationRow row;
      row.iteration = it;
      row.reward_return = collector.pool_mean_reward();
      row.episode_len_steps = collector.pool_mean_length();
      row.mean_power_w = batch.inst_costs.col(0).mean();
      row.jc = batch.jc_estimates;
      row.lambda = lag.lambda;
      row.surrogate = lb.surrogate;
      row.entropy = lb.entropy;
      row.critic_loss = lb.critic;
      row.penalties = lb.penalties;
      row.total = lb.total;
      row.recovery = lb.recovery_path;
      result.record.rows.push_back(row);

      if (metrics_os.is_open()) {
        append_metrics_row(metrics_os, result.record, row);
        metrics_os.flush();
      }
      if (timing_os.is_open()) {
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        timing_os << it << ',' << ms << '\n';
        timing_os.flush();
      }
      if (!out_dir.empty() && tc.checkpoint_every > 0 && (it + 1) % tc.checkpoint_every == 0)
        save_checkpoint(cfg, ac, out_dir + "/" + iter_checkpoint_name(it + 1));

      if (hook) hook(result.record, ac);
      if (stop && stop(result.record)) break;
    }
  } catch (const optimizers::NumericalError&) {
    if (!out_dir.empty()) save_checkpoint(cfg, ac, out_dir + "/policy_postmortem.json");
    throw;
  }

  if (!out_dir.empty()) save_checkpoint(cfg, ac, out_dir + "/policy_final.json");

  result.ac = std::move(ac);
  result.lag = std::move(lag);
  return result;
}

}  // namespace ecrl::harness

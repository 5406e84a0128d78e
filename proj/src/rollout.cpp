#include "ecrl/rollout.hpp"

#include <cmath>
#include <stdexcept>

namespace ecrl::harness {

Collector::EnvSlot::EnvSlot(std::unique_ptr<Env> e, std::uint64_t act_seed, int channels)
    : env(std::move(e)),
      obs_stack(env->obs_frames(), env->obs_frame_dim()),
      priv_stack(env->priv_frames(), env->priv_frame_dim()),
      act_rng(act_seed),
      disc_cost_acc(Vec::Zero(channels)),
      disc_weight(Vec::Ones(channels)),
      cost_sum(Vec::Zero(channels)) {}

Collector::Collector(std::vector<std::unique_ptr<Env>> envs, std::vector<ConstraintSpec> specs,
                     double gamma_reward, double gae_lambda, double reward_scale,
                     int episode_stat_window, std::uint64_t action_seed)
    : specs_(std::move(specs)),
      gamma_reward_(gamma_reward),
      gae_lambda_(gae_lambda),
      reward_scale_(reward_scale),
      window_(static_cast<std::size_t>(episode_stat_window)) {
  if (envs.empty()) throw std::invalid_argument("Collector: no environments");
  channels_ = envs.front()->num_cost_channels();
  obs_mirror_hist_ = envs.front()->obs_mirror().tiled(envs.front()->obs_frames());
  action_mirror_ = envs.front()->action_mirror();
  for (auto& e : envs) {
    if (e->num_cost_channels() != channels_)
      throw std::invalid_argument("Collector: inconsistent cost channels");
    const auto idx = static_cast<std::uint64_t>(envs_.size());
    envs_.emplace_back(std::move(e), Rng::derive(action_seed, idx), channels_);
  }
  for (auto& spec : specs_) spec.validate();
  for (auto& slot : envs_) {
    slot.env->reset();
    slot.obs_stack.reset(slot.env->obs_frame());
    slot.priv_stack.reset(slot.env->priv_frame());
  }
}

double Collector::channel_gamma(int channel) const {
  for (const auto& spec : specs_)
    if (spec.channel == channel && spec.kind == cmdp::ConstraintKind::DiscountedSum)
      return spec.gamma_c;
  return 1.0;
}

void Collector::finish_episode(EnvSlot& slot) {
  EpisodeStats st;
  st.discounted_costs = slot.disc_cost_acc;
  st.mean_costs = slot.steps > 0 ? Vec((slot.cost_sum / slot.steps).eval()) : Vec::Zero(channels_);
  st.total_reward = slot.reward_sum;
  st.length_steps = slot.steps;
  pool_.push_back(std::move(st));
  while (pool_.size() > window_) pool_.pop_front();
  slot.disc_cost_acc.setZero();
  slot.disc_weight.setOnes();
  slot.cost_sum.setZero();
  slot.reward_sum = 0.0;
  slot.steps = 0;
}

optimizers::UpdateBatch Collector::collect(const GaussianPolicy& pi, const RewardCritic& critic,
                                           int steps_per_env, double mu_e) {
  const int E = num_envs();
  const int N = steps_per_env;
  const int B = E * N;
  const int obs_dim = envs_.front().obs_stack.size();
  const int priv_dim = envs_.front().priv_stack.size();
  const int n_act = envs_.front().env->action_dim();

  optimizers::UpdateBatch batch;
  batch.obs.resize(B, obs_dim);
  batch.obs_mirrored.resize(B, obs_dim);
  batch.priv_obs.resize(B, priv_dim);
  batch.actions.resize(B, n_act);
  batch.old_log_prob.resize(B);
  batch.advantages.resize(B);
  batch.value_targets.resize(B);
  batch.cost_to_go.resize(B, channels_);
  batch.inst_costs.resize(B, channels_);
  batch.action_mirror = action_mirror_;

  Vec rewards(B);
  Vec state_values(B);
  Vec trunc_bootstrap = Vec::Zero(B);
  std::vector<char> done_flags(static_cast<std::size_t>(B), 0);
  std::vector<char> trunc_flags(static_cast<std::size_t>(B), 0);

  Mat step_obs(E, obs_dim), step_priv(E, priv_dim);
  const Vec sigma = pi.log_std.array().exp();

  for (int t = 0; t < N; ++t) {
    for (int e = 0; e < E; ++e) {
      step_obs.row(e) = envs_[static_cast<std::size_t>(e)].obs_stack.stacked().transpose();
      step_priv.row(e) = envs_[static_cast<std::size_t>(e)].priv_stack.stacked().transpose();
    }
    const Mat step_obs_m = obs_mirror_hist_.apply_rows(step_obs);
    const Mat means = pi.mean_batch(step_obs);
    const Mat means_m = action_mirror_.apply_rows(pi.mean_batch(step_obs_m));
    const Vec values = critic.value_batch(step_priv);

    for (int e = 0; e < E; ++e) {
      EnvSlot& slot = envs_[static_cast<std::size_t>(e)];
      const int row = e * N + t;

      Vec action(n_act);
      for (int j = 0; j < n_act; ++j)
        action[j] = means(e, j) + sigma[j] * slot.act_rng.normal();
      const double logp = pi.log_prob_given_mean(means.row(e).transpose(), action);

      const env::StepOutput out = slot.env->step(action);

      batch.obs.row(row) = step_obs.row(e);
      batch.obs_mirrored.row(row) = step_obs_m.row(e);
      batch.priv_obs.row(row) = step_priv.row(e);
      batch.actions.row(row) = action.transpose();
      batch.old_log_prob[row] = logp;
      state_values[row] = values[e];

      Vec costs = out.cost_channels;
      if (channels_ > 1) costs[1] = (means.row(e) - means_m.row(e)).squaredNorm();
      batch.inst_costs.row(row) = costs.transpose();
      rewards[row] = out.reward;
      done_flags[static_cast<std::size_t>(row)] = out.done ? 1 : 0;
      trunc_flags[static_cast<std::size_t>(row)] = out.truncated ? 1 : 0;

      slot.reward_sum += out.reward;
      slot.steps += 1;
      slot.disc_cost_acc += slot.disc_weight.cwiseProduct(costs);
      for (int c = 0; c < channels_; ++c) slot.disc_weight[c] *= channel_gamma(c);
      slot.cost_sum += costs;

      if (out.done) {
        if (out.truncated) {
          // Value of the post-step state, captured before the reset below.
          env::FrameStacker tmp = slot.priv_stack;
          tmp.push(slot.env->priv_frame());
          trunc_bootstrap[row] = critic.value(tmp.stacked());
        }
        finish_episode(slot);
        slot.env->reset();
        slot.obs_stack.reset(slot.env->obs_frame());
        slot.priv_stack.reset(slot.env->priv_frame());
      } else {
        slot.obs_stack.push(slot.env->obs_frame());
        slot.priv_stack.push(slot.env->priv_frame());
      }
    }
  }

  // Apply the PPO baseline's energy penalty before advantage estimation,
  // then the critic-side reward scaling. The episode pool keeps raw task
  // rewards so cross-algorithm comparisons stay in one unit.
  if (mu_e != 0.0)
    rewards = optimizers::ppo_penalty_reward(rewards, batch.inst_costs.col(0), mu_e);
  if (reward_scale_ != 1.0) rewards *= reward_scale_;

  // Per-environment fragment boundaries: GAE for rewards (critic bootstrap
  // at truncation and mid-episode cuts, zero at terminations) and
  // Monte-Carlo cost-to-go with zero bootstrap past the collection window.
  last_trajectories_.clear();
  for (int e = 0; e < E; ++e) {
    EnvSlot& slot = envs_[static_cast<std::size_t>(e)];
    int start = 0;
    while (start < N) {
      int end = start;
      while (end < N && !done_flags[static_cast<std::size_t>(e * N + end)]) ++end;
      const bool has_done = end < N;
      if (has_done) ++end;  // include the final step of the episode
      const int len = end - start;
      const int last_row = e * N + end - 1;

      Vec frag_rewards(len), frag_values(len);
      for (int k = 0; k < len; ++k) {
        frag_rewards[k] = rewards[e * N + start + k];
        frag_values[k] = state_values[e * N + start + k];
      }
      double bootstrap = 0.0;
      if (!has_done)
        bootstrap = critic.value(slot.priv_stack.stacked());
      else if (trunc_flags[static_cast<std::size_t>(last_row)])
        bootstrap = trunc_bootstrap[last_row];

      const Vec adv =
          cmdp::gae_advantages(frag_rewards, frag_values, bootstrap, gamma_reward_, gae_lambda_);
      for (int k = 0; k < len; ++k) {
        const int row = e * N + start + k;
        batch.advantages[row] = adv[k];
        batch.value_targets[row] = adv[k] + frag_values[k];
      }
      for (int c = 0; c < channels_; ++c) {
        Vec frag_costs(len);
        for (int k = 0; k < len; ++k) frag_costs[k] = batch.inst_costs(e * N + start + k, c);
        const Vec ctg = cmdp::cost_to_go(frag_costs, channel_gamma(c));
        for (int k = 0; k < len; ++k) batch.cost_to_go(e * N + start + k, c) = ctg[k];
      }

      cmdp::Trajectory traj;
      traj.bootstrap_value = bootstrap;
      for (int k = 0; k < len; ++k) {
        const int row = e * N + start + k;
        cmdp::Transition tr;
        tr.obs_history = batch.obs.row(row).transpose();
        tr.privileged_obs = batch.priv_obs.row(row).transpose();
        tr.action = batch.actions.row(row).transpose();
        tr.log_prob = batch.old_log_prob[row];
        tr.reward = rewards[row];
        tr.cost_channels = batch.inst_costs.row(row).transpose();
        tr.value_estimate = state_values[row];
        tr.done = done_flags[static_cast<std::size_t>(row)] != 0 &&
                  trunc_flags[static_cast<std::size_t>(row)] == 0;
        tr.timestep = start + k;
        traj.transitions.push_back(std::move(tr));
      }
      last_trajectories_.push_back(std::move(traj));
      start = end;
    }
  }

  // Batch-level constraint estimates: completed-episode discounted returns
  // for DiscountedSum channels, gradient-batch means for BatchAverage.
  batch.jc_estimates = Vec::Zero(static_cast<Eigen::Index>(specs_.size()));
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& spec = specs_[i];
    double value = 0.0;
    if (spec.kind == cmdp::ConstraintKind::DiscountedSum) {
      if (!pool_.empty()) {
        value = pool_mean_discounted_cost(spec.channel);
      } else {
        // No completed episode yet; fall back to the batch cost-to-go mean.
        value = batch.cost_to_go.col(spec.channel).mean();
      }
    } else {
      value = batch.inst_costs.col(spec.channel).mean();
    }
    batch.jc_estimates[static_cast<Eigen::Index>(i)] = value;
  }

  return batch;
}

double Collector::pool_mean_reward() const {
  double acc = 0.0;
  for (const auto& st : pool_) acc += st.total_reward;
  return pool_.empty() ? 0.0 : acc / static_cast<double>(pool_.size());
}

double Collector::pool_mean_length() const {
  double acc = 0.0;
  for (const auto& st : pool_) acc += st.length_steps;
  return pool_.empty() ? 0.0 : acc / static_cast<double>(pool_.size());
}

double Collector::pool_mean_discounted_cost(int channel) const {
  double acc = 0.0;
  for (const auto& st : pool_) acc += st.discounted_costs[channel];
  return pool_.empty() ? 0.0 : acc / static_cast<double>(pool_.size());
}

double Collector::pool_mean_cost(int channel) const {
  double acc = 0.0;
  for (const auto& st : pool_) acc += st.mean_costs[channel];
  return pool_.empty() ? 0.0 : acc / static_cast<double>(pool_.size());
}

}  // namespace ecrl::harness

#pragma once

#include <deque>
#include <memory>
#include <vector>

#include "ecrl/cmdp.hpp"
#include "ecrl/env.hpp"
#include "ecrl/optimizers.hpp"

namespace ecrl::harness {

using cmdp::ConstraintSpec;
using env::Env;
using netgrad::Mat;
using netgrad::Vec;
using policy::GaussianPolicy;
using policy::RewardCritic;

// Completed-episode statistics kept in a bounded pool; discounted cost
// returns use each DiscountedSum spec's own discount.
struct EpisodeStats {
  Vec discounted_costs;  // per channel
  Vec mean_costs;        // per channel, per-step mean
  double total_reward = 0.0;
  int length_steps = 0;
};

// Steps E independent environments in lockstep under a frozen policy,
// assembling update batches. Policy means, critic values, and the mirror
// cost channel are evaluated batched across environments.
class Collector {
 public:
  Collector(std::vector<std::unique_ptr<Env>> envs, std::vector<ConstraintSpec> specs,
            double gamma_reward, double gae_lambda, double reward_scale,
            int episode_stat_window, std::uint64_t action_seed);

  // mu_e applies the energy penalty-reward modification (PPO baseline)
  // before advantages are computed.
  optimizers::UpdateBatch collect(const GaussianPolicy& pi, const RewardCritic& critic,
                                  int steps_per_env, double mu_e = 0.0);

  int num_envs() const { return static_cast<int>(envs_.size()); }
  const Env& env(int i) const { return *envs_[static_cast<std::size_t>(i)].env; }

  // Pool accessors (means over the completed-episode window).
  bool pool_empty() const { return pool_.empty(); }
  double pool_mean_reward() const;
  double pool_mean_length() const;
  double pool_mean_discounted_cost(int channel) const;
  double pool_mean_cost(int channel) const;

  // Debug view of the last collected segment, one trajectory per fragment.
  const std::vector<cmdp::Trajectory>& last_trajectories() const { return last_trajectories_; }

 private:
  struct EnvSlot {
    std::unique_ptr<Env> env;
    env::FrameStacker obs_stack;
    env::FrameStacker priv_stack;
    Rng act_rng;
    // Episode accumulators.
    Vec disc_cost_acc;
    Vec disc_weight;  // per-channel gamma^t
    Vec cost_sum;
    double reward_sum = 0.0;
    int steps = 0;
    EnvSlot(std::unique_ptr<Env> e, std::uint64_t act_seed, int channels);
  };

  void finish_episode(EnvSlot& slot);
  double channel_gamma(int channel) const;

  std::vector<EnvSlot> envs_;
  std::vector<ConstraintSpec> specs_;
  double gamma_reward_;
  double gae_lambda_;
  double reward_scale_;
  std::size_t window_;
  std::deque<EpisodeStats> pool_;
  std::vector<cmdp::Trajectory> last_trajectories_;
  policy::SignedPerm obs_mirror_hist_;
  policy::SignedPerm action_mirror_;
  int channels_ = 0;
};

}  // namespace ecrl::harness

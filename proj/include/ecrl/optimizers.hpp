#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecrl/cmdp.hpp"
#include "ecrl/net.hpp"
#include "ecrl/policy.hpp"
#include "ecrl/rng.hpp"

namespace ecrl::optimizers {

using cmdp::ConstraintKind;
using cmdp::ConstraintSpec;
using netgrad::Adam;
using netgrad::AdamConfig;
using netgrad::Mat;
using netgrad::NetGrads;
using netgrad::Tape;
using netgrad::Vec;
using policy::GaussianPolicy;
using policy::RewardCritic;
using policy::SignedPerm;

enum class Algo { PPO, PPOLag, CRPO, IPO, P3O };

std::string algo_name(Algo a);
Algo algo_from_name(const std::string& name);

struct OptimizerConfig {
  Algo algo = Algo::PPOLag;
  double clip_c1 = 0.8;  // ratio clip bounds, 0 < c1 < 1 < c2
  double clip_c2 = 1.2;
  std::vector<double> kappa_ipo;  // per constraint, > 0 where used
  std::vector<double> kappa_p3o;
  double mu_e = 0.0;                // energy penalty reward scale (PPO baseline), <= 0
  double mirror_loss_weight = 0.0;  // fixed-weight mirror loss (PPO baseline)
  int epochs = 2;
  int minibatches = 4;
  double entropy_coef = 1e-3;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double lambda_lr = 1e-3;  // beta_i, dual Adam learning rate
  double ratio_exp_bound = 30.0;
  double target_critic_decay = 0.0;  // EMA factor; 0 = last iteration's critic
  bool freeze_multipliers = false;

  void validate(std::size_t num_constraints) const;
};

// Dual state: one nonnegative multiplier per constraint, each with its own
// Adam instance.
struct LagrangeState {
  Vec lambda;
  std::vector<Adam> opts;

  static LagrangeState make(int num_constraints, double beta);
  int size() const { return static_cast<int>(lambda.size()); }
};

// Components of one policy-update objective. total is the maximized quantity:
//   feasible path:  surrogate - sum(penalties) + entropy_coef * entropy
//                   - mirror_loss_weight * aux_mirror
//   recovery path (CRPO cost descent, infeasible IPO): -penalties[selected]
//                   + entropy_coef * entropy
// The surrogate field is reported as 0 on the recovery path since it is not
// part of the objective there.
struct LossBreakdown {
  double surrogate = 0.0;
  double entropy = 0.0;
  double critic = 0.0;
  double aux_mirror = 0.0;
  double total = 0.0;
  Vec penalties;
  bool recovery_path = false;
  int selected_constraint = -1;
};

// Thrown when a loss or gradient goes non-finite; the caller saves state for
// post-mortem and aborts the run.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- value-level pieces (unit-testable without a tape) ----

// Mean over samples of min(r*A, clip(r, c1, c2)*A). Throws on empty input.
double ppo_surrogate(const Vec& ratios, const Vec& advantages, double c1, double c2);

// Mean over samples of max(|V - R|^2, |Vt + clip(Vt - V, lo, hi) - R|^2).
// The clip bounds are centered offsets (pass c1 - 1, c2 - 1).
double critic_loss(const Vec& values, const Vec& target_values, const Vec& returns,
                   double clip_lo, double clip_hi);

// Dual ascent with projection: lambda_i <- max(0, lambda_i + adam(jc_i - b_i)).
void dual_update(LagrangeState& lag, const Vec& j_c, const std::vector<ConstraintSpec>& specs);

// Uniformly selects one violated constraint; -1 when all are satisfied.
int crpo_select(const Vec& j_c, const std::vector<ConstraintSpec>& specs, Rng& rng);

// reward'_t = reward_t + mu_e * energy_t (requires mu_e <= 0).
Vec ppo_penalty_reward(const Vec& rewards, const Vec& instant_energy, double mu_e);

// ---- batched update ----

// One training batch as consumed by update_iteration. Rows are samples.
struct UpdateBatch {
  Mat obs;           // B x obs_dim
  Mat obs_mirrored;  // B x obs_dim; may be empty when no mirror term is used
  Mat priv_obs;      // B x priv_dim
  Mat actions;       // B x n
  Vec old_log_prob;  // B
  Vec advantages;    // B, normalized inside update_iteration
  Vec value_targets; // B, reward returns for the critic
  Mat cost_to_go;    // B x m; columns for DiscountedSum channels
  Mat inst_costs;    // B x m; instantaneous channel values
  Vec jc_estimates;  // m, batch-level constraint estimates
  SignedPerm action_mirror;

  int size() const { return static_cast<int>(obs.rows()); }
};

// Actor/critic training bundle. target_critic is an EMA copy of the critic
// refreshed once per iteration.
struct ActorCritic {
  GaussianPolicy pi;
  RewardCritic critic;
  netgrad::DenseNet target_critic;
  Adam actor_opt;
  Adam critic_opt;

  static ActorCritic make(GaussianPolicy pi, RewardCritic critic, double actor_lr,
                          double critic_lr);
};

// Runs the configured epochs of minibatch ascent on the algorithm objective
// plus critic descent, then the EMA target refresh and (for PPOLag) one dual
// update. Returns mean loss components over all minibatch updates.
LossBreakdown update_iteration(const UpdateBatch& batch, const OptimizerConfig& cfg,
                               const std::vector<ConstraintSpec>& specs, LagrangeState& lag,
                               ActorCritic& ac, Rng& rng);

// Builds the actor objective graph for one minibatch exactly as
// update_iteration does and returns the objective node (to maximize).
// Exposed so gradient checks exercise the same code path.
struct ObjectiveMode {
  bool recovery = false;
  int selected = -1;            // CRPO / recovery constraint choice
  Vec epsilon;                  // P3O offsets, per constraint
};

struct ActorGraph {
  int objective = -1;  // node id
  LossBreakdown parts;
};

ActorGraph build_actor_objective(Tape& tape, const OptimizerConfig& cfg,
                                 const std::vector<ConstraintSpec>& specs,
                                 const Vec& lambda, const ObjectiveMode& mode,
                                 const UpdateBatch& batch, const std::vector<int>& rows,
                                 const GaussianPolicy& pi, NetGrads* mean_grads,
                                 Mat* log_std_grad);

// Critic loss graph for one minibatch (target values precomputed).
int build_critic_loss(Tape& tape, const OptimizerConfig& cfg, const RewardCritic& critic,
                      NetGrads* critic_grads, const Mat& priv_obs, const Vec& target_values,
                      const Vec& returns);

// Decide CRPO/IPO mode and P3O epsilons for this iteration from the batch
// constraint estimates.
ObjectiveMode decide_mode(const OptimizerConfig& cfg, const std::vector<ConstraintSpec>& specs,
                          const Vec& jc_estimates, Rng& rng);

Mat gather_rows(const Mat& M, const std::vector<int>& rows);
Vec gather(const Vec& v, const std::vector<int>& rows);

}  // namespace ecrl::optimizers

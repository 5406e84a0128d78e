#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

namespace ecrl::cmdp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// One environment step as stored in a rollout buffer. Cost channels are
// nonnegative by contract; channel 0 is instantaneous motor power in watts,
// channel 1 the dimensionless mirror distance, channels 2..4 optional.
struct Transition {
  VectorXd obs_history;     // stacked K_f frames, normalized
  VectorXd privileged_obs;  // stacked privileged frames, noiseless
  VectorXd action;          // rad, joint-offset units
  double log_prob = 0.0;
  double reward = 0.0;
  VectorXd cost_channels;
  double value_estimate = 0.0;
  bool done = false;
  int timestep = 0;
};

// Episode fragment. bootstrap_value is the critic value at truncation and 0
// when the final transition terminated the episode.
struct Trajectory {
  std::vector<Transition> transitions;
  double bootstrap_value = 0.0;

  int length() const { return static_cast<int>(transitions.size()); }
  // Checks the structural invariants (done only at the tail, nonnegative
  // costs, finite log-probs, length within horizon). Throws on violation.
  void validate(int horizon) const;
};

enum class ConstraintKind { DiscountedSum, BatchAverage };

struct ConstraintSpec {
  int channel = 0;
  ConstraintKind kind = ConstraintKind::DiscountedSum;
  double gamma_c = 1.0;  // used only for DiscountedSum
  double threshold_b = 0.0;

  void validate() const;  // gamma_c in (0,1]; positive threshold on channel 0
};

struct AdvantageSet {
  VectorXd advantages;
  VectorXd reward_returns;
  MatrixXd cost_returns;  // T x m, Monte-Carlo discounted cost-to-go
};

// sum_t gamma^t values[t], evaluated by the backward Horner recursion so it
// agrees bit-for-bit with cost_to_go()[0]. gamma must lie in [0, 1].
double discounted_return(const VectorXd& values, double gamma);

// Standard GAE backward recursion with V_T = bootstrap. Empty input gives an
// empty result.
VectorXd gae_advantages(const VectorXd& rewards, const VectorXd& values,
                        double bootstrap, double gamma, double lambda_gae);

// Aggregate of one cost channel over a trajectory per the constraint kind.
double constraint_return(const Trajectory& traj, const ConstraintSpec& spec);

// Per-step discounted cost-to-go, zero bootstrap past the window.
VectorXd cost_to_go(const VectorXd& costs, double gamma_c);

// Signed slack j_c - b; positive means violated.
double violation(const ConstraintSpec& spec, double j_c);

// Debug dump, one row per step: t, reward, cost_1..cost_m, value, log_prob,
// done. Doubles are printed round-trip exact.
void dump_csv(std::ostream& os, const std::vector<Trajectory>& trajectories);

}  // namespace ecrl::cmdp

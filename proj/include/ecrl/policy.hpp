#pragma once

#include <Eigen/Dense>
#include <functional>

#include "ecrl/net.hpp"
#include "ecrl/rng.hpp"

namespace ecrl::policy {

using netgrad::Activation;
using netgrad::DenseNet;
using netgrad::Mat;
using netgrad::Vec;

struct ActionSample {
  Vec action;       // raw sample, clamped later at PD conversion
  double log_prob;  // density of the sample under the current Gaussian
};

// Diagonal-Gaussian policy: state-independent learnable log-std over a
// DenseNet mean. Observations are full stacked histories.
struct GaussianPolicy {
  DenseNet mean_net;
  Vec log_std;

  static GaussianPolicy make(int obs_dim, const std::vector<int>& hidden, int action_dim,
                             Activation act, double init_log_std, Rng& rng);

  int obs_dim() const { return mean_net.input_dim(); }
  int action_dim() const { return mean_net.output_dim(); }

  Vec mean_action(const Vec& obs_history) const { return mean_net.forward(obs_history); }
  Mat mean_batch(const Mat& obs) const { return mean_net.forward_batch(obs); }

  ActionSample act(const Vec& obs_history, Rng& rng) const;
  double log_prob(const Vec& obs_history, const Vec& action) const;
  double log_prob_given_mean(const Vec& mean, const Vec& action) const;
};

// exp(new - old) with the exponent clamped to +-exp_bound.
double ratio(double new_log_prob, double old_log_prob, double exp_bound = 30.0);

struct RewardCritic {
  DenseNet value_net;

  static RewardCritic make(int obs_dim, const std::vector<int>& hidden, Activation act, Rng& rng);

  double value(const Vec& privileged_obs) const;
  Vec value_batch(const Mat& obs) const;
};

// Signed column permutation: out[i] = sign[i] * in[src[i]]. Used for the
// observation and action mirroring maps.
struct SignedPerm {
  std::vector<int> src;
  Vec sign;

  static SignedPerm identity(int n);
  int dim() const { return static_cast<int>(src.size()); }
  Vec apply(const Vec& x) const;
  Mat apply_rows(const Mat& X) const;
  // Block-diagonal repetition across a stacked frame history.
  SignedPerm tiled(int copies) const;
  bool is_involution() const;
};

using MeanFn = std::function<Vec(const Vec&)>;

// Squared mirror-symmetry distance of a mean function at one observation:
// || f(s) - Psi_a(f(Psi_o(s))) ||^2.
double mirror_cost(const MeanFn& mean_fn, const Vec& obs, const SignedPerm& obs_mirror,
                   const SignedPerm& action_mirror);
double mirror_cost(const GaussianPolicy& pi, const Vec& obs, const SignedPerm& obs_mirror,
                   const SignedPerm& action_mirror);
// Batched variant over precomputed mirrored observations, one value per row.
Vec mirror_cost_batch(const GaussianPolicy& pi, const Mat& obs, const Mat& obs_mirrored,
                      const SignedPerm& action_mirror);

// Mean function symmetrized by construction; its mirror cost vanishes.
MeanFn symmetrized_mean(const GaussianPolicy& pi, const SignedPerm& obs_mirror,
                        const SignedPerm& action_mirror);

}  // namespace ecrl::policy

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecrl/biped_env.hpp"
#include "ecrl/cmdp.hpp"
#include "ecrl/optimizers.hpp"
#include "ecrl/toy_env.hpp"

namespace ecrl::harness {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainingConfig {
  int num_envs = 64;
  int steps_per_env = 48;
  int iterations = 500;
  double gamma_reward = 0.994;
  double gae_lambda = 0.95;
  double reward_scale = 1.0;  // scales rewards entering GAE/critic (values only)
  int checkpoint_every = 50;
  int episode_stat_window = 128;  // completed-episode pool for constraint estimates
  std::vector<int> actor_hidden = {256, 256};
  std::vector<int> critic_hidden = {256, 256};
  double init_log_std = -0.6931471805599453;  // ln 0.5
  netgrad::Activation activation = netgrad::Activation::Elu;

  void validate() const;
};

// Pass/fail predicate applied to a finished run, used by the threshold
// search. episode_length_frac compares the final-window mean episode length
// against limit * horizon; tracking_error compares the deterministic-eval
// mean |v - v_cmd| against limit.
struct StabilityCriterion {
  std::string kind = "episode_length_frac";
  double limit = 0.9;
  int window = 50;     // trailing iterations in the mean
  int eval_episodes = 5;
};

struct ExperimentConfig {
  std::string env_kind = "biped";  // "biped" | "toy"
  env::BipedConfig biped;
  env::ToyConfig toy;
  std::vector<cmdp::ConstraintSpec> constraints;
  optimizers::OptimizerConfig optimizer;
  TrainingConfig training;
  StabilityCriterion stability;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  // Named optimizer variants selectable in bench runs (JSON patches).
  std::map<std::string, std::string> algorithm_overrides;

  void validate() const;
  std::unique_ptr<env::Env> make_env(std::uint64_t seed) const;
  // Apply a named override (or a bare algorithm name) and return the
  // resulting config; the optimizer algo is set accordingly.
  ExperimentConfig with_algorithm(const std::string& name) const;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

}  // namespace ecrl::harness

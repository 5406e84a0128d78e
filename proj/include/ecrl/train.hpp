#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ecrl/checkpoint.hpp"
#include "ecrl/config.hpp"
#include "ecrl/rollout.hpp"

namespace ecrl::harness {

using optimizers::ActorCritic;
using optimizers::Algo;
using optimizers::LagrangeState;
using optimizers::LossBreakdown;

// One diagnostics row per training iteration. All values are deterministic
// functions of (config, seed); wall-clock timing goes to a sidecar log so
// metric CSVs stay byte-reproducible.
struct IterationRow {
  int iteration = 0;
  double reward_return = 0.0;      // completed-episode pool mean total reward
  double episode_len_steps = 0.0;  // pool mean
  double mean_power_w = 0.0;       // batch mean of the instantaneous energy channel
  Vec jc;                          // per-constraint estimates
  Vec lambda;                      // per-constraint multipliers (zeros when unused)
  double surrogate = 0.0;
  double entropy = 0.0;
  double critic_loss = 0.0;
  Vec penalties;
  double total = 0.0;
  bool recovery = false;
};

struct RunRecord {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<IterationRow> rows;
};

struct TrainResult {
  RunRecord record;
  ActorCritic ac;
  LagrangeState lag;
};

// Optional early-stop predicate, checked after each iteration.
using StopFn = std::function<bool(const RunRecord&)>;
// Per-iteration observer (tests use it to fingerprint parameters).
using IterHook = std::function<void(const RunRecord&, const ActorCritic&)>;

// Runs collect/estimate/update cycles for the configured iteration budget.
// When out_dir is nonempty, writes metrics.csv, checkpoints every
// checkpoint_every iterations, a final checkpoint, and timing.log.
// Aborts on non-finite losses after saving a post-mortem checkpoint.
TrainResult train(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir,
                  const StopFn& stop = nullptr, const IterHook& hook = nullptr);

checkpoint::PolicyCheckpoint make_policy_checkpoint(const ExperimentConfig& cfg,
                                                    const ActorCritic& ac);

// Observation scaling vector matching the env's frame layout (used in
// checkpoints for later evaluation).
Vec obs_scales_for(const ExperimentConfig& cfg);

}  // namespace ecrl::harness

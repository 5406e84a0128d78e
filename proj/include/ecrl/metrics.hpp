#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ecrl/checkpoint.hpp"
#include "ecrl/config.hpp"
#include "ecrl/train.hpp"

namespace ecrl::harness {

struct EvalSummary {
  double mean_speed = 0.0;          // m/s
  double mean_power_w = 0.0;        // mean instantaneous energy channel
  double mean_episode_s = 0.0;
  double mean_mirror_cost = 0.0;
  double mean_tracking_error = 0.0;
  int episodes = 0;
};

// Deterministic mean-action rollouts of a checkpointed policy. Domain
// randomization is off unless `randomize` is set; trajectories are dumped to
// *dump when provided (cmdp CSV layout).
EvalSummary evaluate(const ExperimentConfig& cfg, const checkpoint::PolicyCheckpoint& ckpt,
                     int episodes, std::uint64_t seed, bool randomize = false,
                     std::ostream* dump = nullptr);

struct MetricsSummary {
  struct Row {
    std::string algorithm;
    double reward_mean = 0.0, reward_std = 0.0, norm_reward = 0.0;
    double eplen_mean = 0.0, eplen_std = 0.0, norm_eplen = 0.0;
    double energy_mean = 0.0, energy_std = 0.0;  // mean power, W
    double mirror_mean = 0.0, mirror_std = 0.0;
  };
  std::vector<Row> rows;
  bool degenerate_reward = false;  // max == min, normalized values pinned to 1
  bool degenerate_eplen = false;
};

// Min-max normalization of reward and episode length across algorithms over
// the trailing `window` iterations; energy and mirror costs reported raw.
MetricsSummary normalized_metrics(const std::vector<RunRecord>& records, int window = 50);

std::string metrics_summary_csv(const MetricsSummary& summary);

// Linear search: runs the pass/fail probe on every candidate (ascending) and
// returns the smallest passing threshold with the full sweep table.
struct ThresholdSearchResult {
  std::optional<double> chosen;
  std::vector<std::pair<double, bool>> sweep;
};

ThresholdSearchResult threshold_search(std::vector<double> candidates,
                                       const std::function<bool(double)>& run_passes);

// The production probe behind the search: trains PPOLag with the energy
// threshold set to `threshold_b` (raw aggregate units) for the configured
// budget and applies cfg.stability. Training artifacts go under out_dir when
// nonempty.
bool stability_run_passes(const ExperimentConfig& cfg, double threshold_b, std::uint64_t seed,
                          const std::string& out_dir = "");

// Applies the configured stability criterion to a finished run.
bool stability_criterion_met(const ExperimentConfig& cfg, const TrainResult& result);

}  // namespace ecrl::harness

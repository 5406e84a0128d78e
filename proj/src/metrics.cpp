#include "ecrl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "ecrl/cmdp.hpp"

namespace ecrl::harness {

EvalSummary evaluate(const ExperimentConfig& cfg, const checkpoint::PolicyCheckpoint& ckpt,
                     int episodes, std::uint64_t seed, bool randomize, std::ostream* dump) {
  if (episodes <= 0) throw std::invalid_argument("evaluate: episodes must be positive");
  ExperimentConfig eval_cfg = cfg;
  eval_cfg.biped.randomization.enabled = randomize;
  eval_cfg.toy.v0_noise = randomize ? eval_cfg.toy.v0_noise : 0.0;

  auto e = eval_cfg.make_env(Rng::derive(seed, 7));
  if (ckpt.pi.obs_dim() != e->obs_frames() * e->obs_frame_dim())
    throw std::runtime_error("evaluate: checkpoint incompatible with env observation size");

  env::FrameStacker obs_stack(e->obs_frames(), e->obs_frame_dim());
  env::FrameStacker priv_stack(e->priv_frames(), e->priv_frame_dim());
  const policy::SignedPerm obs_mirror_hist = e->obs_mirror().tiled(e->obs_frames());
  const policy::SignedPerm& act_mirror = e->action_mirror();

  EvalSummary out;
  out.episodes = episodes;
  long total_steps = 0;
  double speed_acc = 0.0, power_acc = 0.0, mirror_acc = 0.0, err_acc = 0.0, seconds_acc = 0.0;
  std::vector<cmdp::Trajectory> dump_trajs;

  for (int ep = 0; ep < episodes; ++ep) {
    e->reset();
    obs_stack.reset(e->obs_frame());
    priv_stack.reset(e->priv_frame());
    cmdp::Trajectory traj;
    int steps = 0;
    while (true) {
      const Vec obs = obs_stack.stacked();
      const Vec mean = ckpt.pi.mean_action(obs);
      const double c2 = policy::mirror_cost(ckpt.pi, obs, obs_mirror_hist, act_mirror);
      const env::StepOutput so = e->step(mean);
      ++steps;
      ++total_steps;
      speed_acc += e->forward_speed();
      err_acc += e->tracking_error();
      power_acc += so.cost_channels[0];
      mirror_acc += c2;
      if (dump) {
        cmdp::Transition tr;
        tr.obs_history = obs;
        tr.privileged_obs = priv_stack.stacked();
        tr.action = mean;
        tr.log_prob = ckpt.pi.log_prob_given_mean(mean, mean);
        tr.reward = so.reward;
        tr.cost_channels = so.cost_channels;
        if (tr.cost_channels.size() > 1) tr.cost_channels[1] = c2;
        tr.value_estimate = ckpt.critic_net.forward(priv_stack.stacked())[0];
        tr.done = so.done && !so.truncated;
        tr.timestep = steps - 1;
        traj.transitions.push_back(std::move(tr));
      }
      if (so.done) break;
      obs_stack.push(e->obs_frame());
      priv_stack.push(e->priv_frame());
    }
    seconds_acc += steps * e->control_dt();
    if (dump) dump_trajs.push_back(std::move(traj));
  }

  if (dump) cmdp::dump_csv(*dump, dump_trajs);

  const double n = static_cast<double>(total_steps);
  out.mean_speed = speed_acc / n;
  out.mean_power_w = power_acc / n;
  out.mean_mirror_cost = mirror_acc / n;
  out.mean_tracking_error = err_acc / n;
  out.mean_episode_s = seconds_acc / episodes;
  return out;
}

namespace {

double window_mean(const RunRecord& rec, int window,
                   const std::function<double(const IterationRow&)>& get) {
  if (rec.rows.empty()) return 0.0;
  const std::size_t n = rec.rows.size();
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(window), n);
  double acc = 0.0;
  for (std::size_t i = n - w; i < n; ++i) acc += get(rec.rows[i]);
  return acc / static_cast<double>(w);
}

}  // namespace

MetricsSummary normalized_metrics(const std::vector<RunRecord>& records, int window) {
  if (records.empty()) throw std::invalid_argument("normalized_metrics: no records");

  struct Agg {
    std::vector<double> reward, eplen, energy, mirror;
  };
  std::vector<std::string> order;
  std::map<std::string, Agg> byalgo;
  for (const auto& rec : records) {
    if (!byalgo.count(rec.algorithm)) order.push_back(rec.algorithm);
    Agg& a = byalgo[rec.algorithm];
    a.reward.push_back(window_mean(rec, window, [](const IterationRow& r) { return r.reward_return; }));
    a.eplen.push_back(window_mean(rec, window, [](const IterationRow& r) { return r.episode_len_steps; }));
    a.energy.push_back(window_mean(rec, window, [](const IterationRow& r) { return r.mean_power_w; }));
    a.mirror.push_back(window_mean(rec, window, [](const IterationRow& r) {
      return r.jc.size() > 1 ? r.jc[1] : 0.0;
    }));
  }

  auto mean_of = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v, double mean) {
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return v.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(v.size()));
  };

  MetricsSummary out;
  for (const auto& algo : order) {
    const Agg& a = byalgo[algo];
    MetricsSummary::Row row;
    row.algorithm = algo;
    row.reward_mean = mean_of(a.reward);
    row.reward_std = std_of(a.reward, row.reward_mean);
    row.eplen_mean = mean_of(a.eplen);
    row.eplen_std = std_of(a.eplen, row.eplen_mean);
    row.energy_mean = mean_of(a.energy);
    row.energy_std = std_of(a.energy, row.energy_mean);
    row.mirror_mean = mean_of(a.mirror);
    row.mirror_std = std_of(a.mirror, row.mirror_mean);
    out.rows.push_back(row);
  }

  double r_lo = 1e300, r_hi = -1e300, l_lo = 1e300, l_hi = -1e300;
  for (const auto& row : out.rows) {
    r_lo = std::min(r_lo, row.reward_mean);
    r_hi = std::max(r_hi, row.reward_mean);
    l_lo = std::min(l_lo, row.eplen_mean);
    l_hi = std::max(l_hi, row.eplen_mean);
  }
  out.degenerate_reward = r_hi == r_lo;
  out.degenerate_eplen = l_hi == l_lo;
  for (auto& row : out.rows) {
    row.norm_reward = out.degenerate_reward ? 1.0 : (row.reward_mean - r_lo) / (r_hi - r_lo);
    row.norm_eplen = out.degenerate_eplen ? 1.0 : (row.eplen_mean - l_lo) / (l_hi - l_lo);
  }
  return out;
}

std::string metrics_summary_csv(const MetricsSummary& summary) {
  std::ostringstream os;
  os << "algorithm,reward_mean,reward_std,norm_reward,eplen_mean,eplen_std,norm_eplen,"
        "energy_mean_w,energy_std_w,mirror_mean,mirror_std,degenerate_reward,degenerate_eplen\n";
  for (const auto& r : summary.rows) {
    os << r.algorithm << ',' << r.reward_mean << ',' << r.reward_std << ',' << r.norm_reward
       << ',' << r.eplen_mean << ',' << r.eplen_std << ',' << r.norm_eplen << ','
       << r.energy_mean << ',' << r.energy_std << ',' << r.mirror_mean << ',' << r.mirror_std
       << ',' << (summary.degenerate_reward ? 1 : 0) << ','
       << (summary.degenerate_eplen ? 1 : 0) << '\n';
  }
  return os.str();
}

ThresholdSearchResult threshold_search(std::vector<double> candidates,
                                       const std::function<bool(double)>& run_passes) {
  std::sort(candidates.begin(), candidates.end());
  ThresholdSearchResult out;
  for (double b : candidates) {
    const bool pass = run_passes(b);
    out.sweep.emplace_back(b, pass);
    if (pass && !out.chosen) out.chosen = b;
  }
  return out;
}

bool stability_criterion_met(const ExperimentConfig& cfg, const TrainResult& result) {
  const StabilityCriterion& sc = cfg.stability;
  if (sc.kind == "episode_length_frac") {
    const auto probe = cfg.make_env(0);
    const double horizon = static_cast<double>(probe->horizon_steps());
    const double frac =
        window_mean(result.record, sc.window,
                    [](const IterationRow& r) { return r.episode_len_steps; }) /
        horizon;
    return frac >= sc.limit;
  }
  if (sc.kind == "tracking_error") {
    const auto ckpt = make_policy_checkpoint(cfg, result.ac);
    const EvalSummary ev = evaluate(cfg, ckpt, sc.eval_episodes, 90001);
    return ev.mean_tracking_error < sc.limit;
  }
  throw ConfigError("unknown stability criterion: " + sc.kind);
}

bool stability_run_passes(const ExperimentConfig& cfg, double threshold_b, std::uint64_t seed,
                          const std::string& out_dir) {
  ExperimentConfig run_cfg = cfg;
  run_cfg.optimizer.algo = optimizers::Algo::PPOLag;
  if (run_cfg.constraints.empty()) throw ConfigError("threshold search needs a constraint");
  run_cfg.constraints.front().threshold_b = threshold_b;
  const TrainResult result = train(run_cfg, seed, out_dir);
  return stability_criterion_met(run_cfg, result);
}

}  // namespace ecrl::harness

#pragma once

#include <cstdint>

#include "ecrl/env.hpp"

namespace ecrl::env {

// One-dimensional power-regulation task: a velocity v driven by a bounded
// input u against a speed-dependent drag, rewarded for tracking v_cmd and
// charged |u * v| on the energy channel. The drag coefficient ramps up above
// v_knee, so precise tracking costs substantially more than riding the lower
// edge of the tolerance band -- which makes the energy constraint bind.
struct ToyConfig {
  double dt = 0.05;
  int horizon = 100;
  double v_cmd = 1.0;
  double u_max = 2.0;
  double drag_base = 0.3;   // k0
  double drag_ramp = 6.0;   // k1, extra drag per unit speed above the knee
  double v_knee = 0.95;
  double tracking_width = 10.0;  // w in exp(-w * err^2)
  double band = 0.05;            // tracking tolerance used by the DP oracle
  int obs_frames = 2;
  double v0_noise = 0.0;  // uniform +- around v_cmd at reset

  double drag(double v) const {
    const double over = v - v_knee;
    return drag_base + (over > 0.0 ? drag_ramp * over : 0.0);
  }
  double step_v(double v, double u) const { return v + (u - drag(v) * v) * dt; }
  void validate() const;
};

class ToyEnv final : public Env {
 public:
  ToyEnv(ToyConfig config, std::uint64_t seed);

  int obs_frame_dim() const override { return 2; }
  int priv_frame_dim() const override { return 2; }
  int action_dim() const override { return 1; }
  int num_cost_channels() const override { return 2; }
  int obs_frames() const override { return config_.obs_frames; }
  int priv_frames() const override { return config_.obs_frames; }
  int horizon_steps() const override { return config_.horizon; }
  double control_dt() const override { return config_.dt; }

  const SignedPerm& obs_mirror() const override { return obs_mirror_; }
  const SignedPerm& action_mirror() const override { return action_mirror_; }

  void reset() override;
  StepOutput step(const Vec& action) override;

  Vec obs_frame() const override;
  Vec priv_frame() const override;

  double forward_speed() const override { return v_; }
  double tracking_error() const override { return std::abs(v_ - config_.v_cmd); }
  std::vector<std::pair<std::string, double>> telemetry() const override;

  const ToyConfig& config() const { return config_; }

 private:
  ToyConfig config_;
  Rng rng_;
  double v_ = 0.0;
  double last_u_ = 0.0;
  int step_count_ = 0;
  SignedPerm obs_mirror_;
  SignedPerm action_mirror_;
};

// Minimum discounted |u*v| cost over the horizon among policies that keep
// |v - v_cmd| <= band at every step, starting from v = v_cmd. Backward value
// iteration on a velocity grid with linear interpolation; this is the b*
// oracle for the threshold search.
double toy_min_feasible_cost(const ToyConfig& config, double gamma_c,
                             int v_grid = 241, int u_grid = 481);

}  // namespace ecrl::env

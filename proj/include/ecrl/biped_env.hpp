#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ecrl/env.hpp"

namespace ecrl::env {

// Planar biped: floating base (x, z, pitch) plus hip and knee per leg.
// Generalized coordinate order: x, z, pitch, hip_L, knee_L, hip_R, knee_R.
constexpr int kBaseDof = 3;
constexpr int kNumJoints = 4;
constexpr int kNumDof = kBaseDof + kNumJoints;
constexpr int kNumFeet = 2;

struct PhysicalParams {
  double torso_mass = 3.0;     // kg
  double torso_length = 0.30;  // m
  double upper_mass = 0.5;
  double upper_length = 0.20;
  double lower_mass = 0.4;
  double lower_length = 0.20;
  // Inertias about the COM; defaults are slender-rod values.
  double torso_inertia = 3.0 * 0.30 * 0.30 / 12.0;
  double upper_inertia = 0.5 * 0.20 * 0.20 / 12.0;
  double lower_inertia = 0.4 * 0.20 * 0.20 / 12.0;

  Vec kp = (Vec(4) << 10.0, 10.0, 10.0, 10.0).finished();  // N*m/rad
  Vec kd = (Vec(4) << 0.4, 0.4, 0.4, 0.4).finished();      // N*m*s/rad
  Vec q_nominal = (Vec(4) << 0.1, -0.2, 0.1, -0.2).finished();
  Vec joint_lower = (Vec(4) << -1.2, -2.2, -1.2, -2.2).finished();
  Vec joint_upper = (Vec(4) << 1.2, 0.1, 1.2, 0.1).finished();
  double torque_limit = 10.5;  // N*m, actuator peak

  double ground_stiffness = 2e4;       // N/m
  double ground_damping = 200.0;       // N*s/m
  double ground_tangent_stiffness = 1e4;  // anchored friction spring
  double ground_tangent_damping = 200.0;
  double friction = 1.0;
  double restitution = 0.0;
  double gravity = 9.81;

  void validate() const;
  double nominal_base_height() const;
  double total_mass() const { return torso_mass + 2.0 * (upper_mass + lower_mass); }
};

struct DomainRandomizationConfig {
  bool enabled = true;
  double payload_kg = 0.5;          // +- additive on torso mass
  double com_disp_m = 0.05;         // +- additive torso COM x offset
  double friction_lo = 0.1, friction_hi = 2.0;
  double restitution_lo = 0.0, restitution_hi = 0.5;
  double motor_strength_lo = 0.9, motor_strength_hi = 1.1;  // scaling
  double kp_factor_lo = 0.9, kp_factor_hi = 1.1;            // scaling
  double kd_factor_lo = 0.9, kd_factor_hi = 1.1;            // scaling
  double action_delay_ms_max = 10.0;
  double init_pitch_range = 0.1;    // +- rad, uniform
  bool randomize_initial_phase = true;
  bool stagger_first_episode = true;  // desynchronize parallel instances

  // Observation noise, Gaussian 1-sigma in physical units.
  double noise_joint_pos = 0.03;   // rad
  double noise_joint_vel = 0.6;    // rad/s
  double noise_pitch_rate = 0.06;  // rad/s
  double noise_pitch = 0.018;      // rad

  // External perturbations.
  double push_interval_s = 2.0;
  double push_force_n = 100.0;   // +- per axis
  double push_duration_s = 0.001;
  double impulse_interval_s = 4.0;
  double impulse_dv = 0.2;  // m/s linear magnitude cap
};

// Per-episode sampled modifications of the physical parameters plus the
// instantiated perturbation schedule.
struct RandomizationDraw {
  double payload = 0.0;
  double com_offset_x = 0.0;
  double friction = 1.0;
  double restitution = 0.0;
  double motor_strength = 1.0;
  double kp_factor = 1.0;
  double kd_factor = 1.0;
  int action_delay_substeps = 0;
  double init_pitch = 0.0;
  double init_phase = 0.0;

  struct PushEvent {
    long substep = 0;
    double fx = 0.0, fz = 0.0;
  };
  struct ImpulseEvent {
    long substep = 0;
    double dvx = 0.0, dvz = 0.0;
  };
  std::vector<PushEvent> pushes;
  std::vector<ImpulseEvent> impulses;
};

// Samples a draw per the configured ranges and instantiates the push
// schedule over one episode.
RandomizationDraw apply_randomization(Rng& rng, const DomainRandomizationConfig& config,
                                      const PhysicalParams& params, double episode_s,
                                      double substep_dt);

struct RewardScales {
  double tracking_lin_vel = 1.2;
  double foot_air_time = 1.0;
  double foot_contact_velocity = -0.05;
  double foot_clearance = 1.0;
  double foot_contact_number = 1.2;
  double base_orientation = 1.0;
  double foot_contact_force = -0.01;
  double base_height = 0.2;
  double action_smoothness = -0.002;
};

struct RewardTerms {
  double tracking_lin_vel = 0.0;
  double foot_air_time = 0.0;
  double foot_contact_velocity = 0.0;
  double foot_clearance = 0.0;
  double foot_contact_number = 0.0;
  double base_orientation = 0.0;
  double foot_contact_force = 0.0;
  double base_height = 0.0;
  double action_smoothness = 0.0;
  double weighted_sum(const RewardScales& s) const;
};

struct BipedConfig {
  PhysicalParams params;
  DomainRandomizationConfig randomization;
  RewardScales reward_scales;

  double v_cmd = 0.1;           // m/s
  double control_dt = 0.01;     // 100 Hz policy
  int substeps = 10;            // 1 kHz physics
  double episode_s = 12.0;
  double gait_frequency_hz = 1.5;
  double fall_pitch = 0.8;            // rad
  double fall_height_frac = 0.55;     // of nominal base height
  double base_height_target = 0.0;    // 0 -> nominal standing height
  double target_foot_clearance = 0.03;  // h_t, m
  double clearance_tolerance = 0.01;
  double max_contact_force = 50.0;    // N
  double action_clamp = 1.5;          // rad offset bound before PD
  bool enable_aux_costs = false;      // channels 2..4
  int obs_frames = 15;   // K_f
  int priv_frames = 3;

  void validate() const;
};

// PD conversion of a desired joint offset to torque, clamped to the actuator
// limit: tau = Kp (a + q_nominal - q) - Kd qd.
Vec pd_torque(const Vec& action, const Vec& q_joints, const Vec& qd_joints,
              const Vec& kp, const Vec& kd, const Vec& q_nominal, double torque_limit);

// Sum of absolute joint mechanical power |tau_j * qd_j|.
double energy_cost(const Vec& torque, const Vec& qd_joints);

struct EnvState {
  Vec q = Vec::Zero(kNumDof);
  Vec qd = Vec::Zero(kNumDof);
  std::array<bool, kNumFeet> contact{{false, false}};
  std::array<double, kNumFeet> contact_force{{0.0, 0.0}};  // substep mean over the last step
  std::array<bool, kNumFeet> friction_anchored{{false, false}};
  std::array<double, kNumFeet> friction_anchor_x{{0.0, 0.0}};
  std::array<double, kNumFeet> air_time{{0.0, 0.0}};
  double time_s = 0.0;
  double phase = 0.0;  // gait clock, radians
  long substep_count = 0;
  int control_step = 0;
  Vec last_action = Vec::Zero(kNumJoints);
  Vec prev_action = Vec::Zero(kNumJoints);
  RandomizationDraw draw;
};

class BipedEnv final : public Env {
 public:
  BipedEnv(BipedConfig config, std::uint64_t seed);

  int obs_frame_dim() const override { return 17; }
  int priv_frame_dim() const override { return 28; }
  int action_dim() const override { return kNumJoints; }
  int num_cost_channels() const override { return config_.enable_aux_costs ? 5 : 2; }
  int obs_frames() const override { return config_.obs_frames; }
  int priv_frames() const override { return config_.priv_frames; }
  int horizon_steps() const override;
  double control_dt() const override { return config_.control_dt; }

  const SignedPerm& obs_mirror() const override { return obs_mirror_; }
  const SignedPerm& action_mirror() const override { return action_mirror_; }

  void reset() override;
  StepOutput step(const Vec& action) override;

  Vec obs_frame() const override;
  Vec priv_frame() const override;

  double forward_speed() const override { return state_.qd[0]; }
  double tracking_error() const override { return std::abs(state_.qd[0] - config_.v_cmd); }
  std::vector<std::pair<std::string, double>> telemetry() const override;

  const EnvState& state() const { return state_; }
  EnvState& mutable_state() { return state_; }
  const BipedConfig& config() const { return config_; }
  const RewardTerms& last_reward_terms() const { return last_terms_; }
  const Vec& last_torque() const { return last_torque_; }
  double base_height_target() const;

  // Scheduled per-leg stance flags from the square-wave gait clock.
  std::array<bool, kNumFeet> scheduled_stance() const;

  // Per-channel scaling applied to a single observation frame.
  static Vec obs_scales();

  // Auxiliary cost channels (foot clearance deviation, contact velocity,
  // self-collision indicator) for the current state.
  Vec aux_costs() const;

  // Foot world positions/velocities, exposed for tests.
  Eigen::Vector2d foot_position(int foot) const;
  Eigen::Vector2d foot_velocity(int foot) const;

 private:
  struct ChainPoint;
  struct Dynamics;

  void build_mirrors();
  void refresh_obs_cache();
  void substep(const Vec& joint_torque);
  Vec active_action(const Vec& commanded, int substep_index) const;
  Dynamics compute_dynamics() const;

  BipedConfig config_;
  Rng rng_;
  EnvState state_;
  SignedPerm obs_mirror_;
  SignedPerm action_mirror_;
  RewardTerms last_terms_;
  Vec last_torque_ = Vec::Zero(kNumJoints);
  Vec pending_action_ = Vec::Zero(kNumJoints);  // previous command, for delays
  int episode_horizon_steps_ = 0;
  bool first_reset_done_ = false;
  double mean_vx_ = 0.0;  // substep-averaged forward speed of the last step
  double last_push_fx_ = 0.0, last_push_fz_ = 0.0;
  std::array<double, kNumFeet> force_accum_{{0.0, 0.0}};
  Vec obs_cache_;  // noisy observation frame, refreshed once per step
};

// Proper-interior planar segment crossing used by the self-collision channel.
bool segments_cross(const Eigen::Vector2d& a0, const Eigen::Vector2d& a1,
                    const Eigen::Vector2d& b0, const Eigen::Vector2d& b1);

}  // namespace ecrl::env

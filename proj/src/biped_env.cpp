#include "ecrl/biped_env.hpp"

#include <cmath>
#include <stdexcept>

namespace ecrl::env {

namespace {

using Eigen::Vector2d;
using Mat27 = Eigen::Matrix<double, 2, kNumDof>;
using Row7 = Eigen::Matrix<double, 1, kNumDof>;
using Mat77 = Eigen::Matrix<double, kNumDof, kNumDof>;
using Vec7 = Eigen::Matrix<double, kNumDof, 1>;

inline Vector2d rot_apply(double angle, const Vector2d& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

inline Vector2d perp(const Vector2d& v) { return {-v.y(), v.x()}; }

// Observation scaling, humanoid-gym style.
constexpr double kScaleCmd = 2.0;
constexpr double kScaleJointPos = 1.0;
constexpr double kScaleJointVel = 0.05;
constexpr double kScalePitchRate = 0.25;
constexpr double kScalePitch = 1.0;
constexpr double kScaleLinVel = 2.0;
constexpr double kScalePush = 0.01;

}  // namespace

void PhysicalParams::validate() const {
  if (!(torso_mass > 0 && upper_mass > 0 && lower_mass > 0))
    throw std::invalid_argument("masses must be positive");
  if (!(torso_length > 0 && upper_length > 0 && lower_length > 0))
    throw std::invalid_argument("lengths must be positive");
  if (!(ground_stiffness > 0 && ground_damping >= 0))
    throw std::invalid_argument("ground model must have positive stiffness");
  if ((kp.array() < 0).any() || (kd.array() < 0).any())
    throw std::invalid_argument("PD gains must be nonnegative");
  if (!(torque_limit > 0)) throw std::invalid_argument("torque limit must be positive");
}

double PhysicalParams::nominal_base_height() const {
  const double a1 = q_nominal[0];
  const double a2 = q_nominal[0] + q_nominal[1];
  return upper_length * std::cos(a1) + lower_length * std::cos(a2);
}

void BipedConfig::validate() const {
  params.validate();
  if (!(control_dt > 0) || substeps <= 0) throw std::invalid_argument("bad control rate");
  if (!(episode_s > 0)) throw std::invalid_argument("episode length must be positive");
  if (obs_frames <= 0 || priv_frames <= 0) throw std::invalid_argument("bad frame stack");
}

Vec pd_torque(const Vec& action, const Vec& q_joints, const Vec& qd_joints,
              const Vec& kp, const Vec& kd, const Vec& q_nominal, double torque_limit) {
  if (action.size() != q_joints.size() || q_joints.size() != qd_joints.size() ||
      kp.size() != action.size() || kd.size() != action.size() ||
      q_nominal.size() != action.size())
    throw std::invalid_argument("pd_torque: dimension mismatch");
  Vec tau = kp.cwiseProduct(action + q_nominal - q_joints) - kd.cwiseProduct(qd_joints);
  return tau.cwiseMax(-torque_limit).cwiseMin(torque_limit);
}

double energy_cost(const Vec& torque, const Vec& qd_joints) {
  if (torque.size() != qd_joints.size()) throw std::invalid_argument("energy_cost: size mismatch");
  return torque.cwiseProduct(qd_joints).cwiseAbs().sum();
}

double RewardTerms::weighted_sum(const RewardScales& s) const {
  return s.tracking_lin_vel * tracking_lin_vel + s.foot_air_time * foot_air_time +
         s.foot_contact_velocity * foot_contact_velocity + s.foot_clearance * foot_clearance +
         s.foot_contact_number * foot_contact_number + s.base_orientation * base_orientation +
         s.foot_contact_force * foot_contact_force + s.base_height * base_height +
         s.action_smoothness * action_smoothness;
}

RandomizationDraw apply_randomization(Rng& rng, const DomainRandomizationConfig& config,
                                      const PhysicalParams& params, double episode_s,
                                      double substep_dt) {
  RandomizationDraw d;
  d.friction = params.friction;
  d.restitution = params.restitution;
  if (config.enabled) {
    d.payload = rng.uniform(-config.payload_kg, config.payload_kg);
    d.com_offset_x = rng.uniform(-config.com_disp_m, config.com_disp_m);
    d.friction = rng.uniform(config.friction_lo, config.friction_hi);
    d.restitution = rng.uniform(config.restitution_lo, config.restitution_hi);
    d.motor_strength = rng.uniform(config.motor_strength_lo, config.motor_strength_hi);
    d.kp_factor = rng.uniform(config.kp_factor_lo, config.kp_factor_hi);
    d.kd_factor = rng.uniform(config.kd_factor_lo, config.kd_factor_hi);
    d.action_delay_substeps = static_cast<int>(
        std::lround(rng.uniform(0.0, config.action_delay_ms_max * 1e-3) / substep_dt));
    d.init_pitch = rng.uniform(-config.init_pitch_range, config.init_pitch_range);
    if (config.randomize_initial_phase) d.init_phase = rng.uniform(0.0, 2.0 * M_PI);

    const long horizon_substeps = static_cast<long>(std::llround(episode_s / substep_dt));
    const long push_period = static_cast<long>(std::llround(config.push_interval_s / substep_dt));
    const long push_len = std::max<long>(1, std::llround(config.push_duration_s / substep_dt));
    if (push_period > 0) {
      for (long t = push_period; t < horizon_substeps; t += push_period) {
        RandomizationDraw::PushEvent ev;
        ev.substep = t;
        ev.fx = rng.uniform(-config.push_force_n, config.push_force_n);
        ev.fz = rng.uniform(-config.push_force_n, config.push_force_n);
        for (long k = 0; k < push_len; ++k) {
          auto copy = ev;
          copy.substep = t + k;
          d.pushes.push_back(copy);
        }
      }
    }
    const long imp_period = static_cast<long>(std::llround(config.impulse_interval_s / substep_dt));
    if (imp_period > 0) {
      for (long t = imp_period; t < horizon_substeps; t += imp_period) {
        RandomizationDraw::ImpulseEvent ev;
        ev.substep = t;
        const double mag = rng.uniform(0.0, config.impulse_dv);
        const double ang = rng.uniform(0.0, 2.0 * M_PI);
        ev.dvx = mag * std::cos(ang);
        ev.dvz = mag * std::sin(ang);
        d.impulses.push_back(ev);
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Kinematics. A chain point is a world position assembled from the floating
// base plus rotated offsets; the sets of generalized coordinates entering
// each cumulative rotation are fixed by the morphology.
// ---------------------------------------------------------------------------

struct BipedEnv::ChainPoint {
  Vector2d pos = Vector2d::Zero();
  Mat27 jac = Mat27::Zero();
  Vector2d vel = Vector2d::Zero();
  Vector2d bias = Vector2d::Zero();  // acceleration with qdd = 0

  static ChainPoint base_point(const Vec& q, const Vec& qd) {
    ChainPoint p;
    p.pos = {q[0], q[1]};
    p.jac(0, 0) = 1.0;
    p.jac(1, 1) = 1.0;
    p.vel = {qd[0], qd[1]};
    return p;
  }

  void add_offset(const Vec& q, const Vec& qd, std::initializer_list<int> angle_idx,
                  const Vector2d& offset) {
    double theta = 0.0, omega = 0.0;
    for (int i : angle_idx) {
      theta += q[i];
      omega += qd[i];
    }
    const Vector2d v = rot_apply(theta, offset);
    const Vector2d vp = perp(v);
    pos += v;
    vel += omega * vp;
    bias += -omega * omega * v;
    for (int i : angle_idx) jac.col(i) += vp;
  }
};

struct BipedEnv::Dynamics {
  Mat77 M = Mat77::Zero();
  Vec7 rhs = Vec7::Zero();  // gravity minus velocity-product terms
  ChainPoint foot[kNumFeet];
};

BipedEnv::Dynamics BipedEnv::compute_dynamics() const {
  const PhysicalParams& pp = config_.params;
  const Vec& q = state_.q;
  const Vec& qd = state_.qd;
  const double torso_mass = pp.torso_mass + state_.draw.payload;

  Dynamics dyn;

  struct Link {
    ChainPoint com;
    Row7 jphi = Row7::Zero();
    double mass = 0.0;
    double inertia = 0.0;
  };
  Link links[5];

  // Torso.
  links[0].com = ChainPoint::base_point(q, qd);
  links[0].com.add_offset(q, qd, {2}, {state_.draw.com_offset_x, 0.5 * pp.torso_length});
  links[0].jphi(0, 2) = 1.0;
  links[0].mass = torso_mass;
  links[0].inertia = pp.torso_inertia;

  // Legs: upper and lower links, left then right.
  const int hip_idx[2] = {3, 5};
  const int knee_idx[2] = {4, 6};
  for (int leg = 0; leg < 2; ++leg) {
    const int h = hip_idx[leg];
    const int k = knee_idx[leg];
    Link& upper = links[1 + 2 * leg];
    upper.com = ChainPoint::base_point(q, qd);
    upper.com.add_offset(q, qd, {2, h}, {0.0, -0.5 * pp.upper_length});
    upper.jphi(0, 2) = upper.jphi(0, h) = 1.0;
    upper.mass = pp.upper_mass;
    upper.inertia = pp.upper_inertia;

    Link& lower = links[2 + 2 * leg];
    lower.com = ChainPoint::base_point(q, qd);
    lower.com.add_offset(q, qd, {2, h}, {0.0, -pp.upper_length});
    lower.com.add_offset(q, qd, {2, h, k}, {0.0, -0.5 * pp.lower_length});
    lower.jphi(0, 2) = lower.jphi(0, h) = lower.jphi(0, k) = 1.0;
    lower.mass = pp.lower_mass;
    lower.inertia = pp.lower_inertia;

    dyn.foot[leg] = ChainPoint::base_point(q, qd);
    dyn.foot[leg].add_offset(q, qd, {2, h}, {0.0, -pp.upper_length});
    dyn.foot[leg].add_offset(q, qd, {2, h, k}, {0.0, -pp.lower_length});
  }

  const Vector2d gravity(0.0, -pp.gravity);
  for (const Link& link : links) {
    dyn.M.noalias() += link.mass * link.com.jac.transpose() * link.com.jac;
    dyn.M.noalias() += link.inertia * link.jphi.transpose() * link.jphi;
    dyn.rhs.noalias() +=
        link.com.jac.transpose() * (link.mass * (gravity - link.com.bias));
  }
  return dyn;
}

// ---------------------------------------------------------------------------

BipedEnv::BipedEnv(BipedConfig config, std::uint64_t seed)
    : config_(std::move(config)), rng_(seed) {
  config_.validate();
  build_mirrors();
  reset();
}

void BipedEnv::build_mirrors() {
  // Frame layout: cmd, sin, cos, q(4), qd(4), pitch rate, last action(4), pitch.
  const int n = obs_frame_dim();
  obs_mirror_.src.resize(static_cast<std::size_t>(n));
  obs_mirror_.sign = Vec::Ones(n);
  for (int i = 0; i < n; ++i) obs_mirror_.src[static_cast<std::size_t>(i)] = i;
  auto swap_pair = [&](int a, int b) {
    obs_mirror_.src[static_cast<std::size_t>(a)] = b;
    obs_mirror_.src[static_cast<std::size_t>(b)] = a;
  };
  // Half-period phase shift negates both clock inputs.
  obs_mirror_.sign[1] = -1.0;
  obs_mirror_.sign[2] = -1.0;
  swap_pair(3, 5);   // hip position
  swap_pair(4, 6);   // knee position
  swap_pair(7, 9);   // hip velocity
  swap_pair(8, 10);  // knee velocity
  swap_pair(12, 14);  // last action hip
  swap_pair(13, 15);  // last action knee

  action_mirror_.src = {2, 3, 0, 1};
  action_mirror_.sign = Vec::Ones(kNumJoints);
}

int BipedEnv::horizon_steps() const {
  return static_cast<int>(std::lround(config_.episode_s / config_.control_dt));
}

double BipedEnv::base_height_target() const {
  return config_.base_height_target > 0.0 ? config_.base_height_target
                                          : config_.params.nominal_base_height();
}

void BipedEnv::reset() {
  const double substep_dt = config_.control_dt / config_.substeps;
  state_ = EnvState{};
  state_.draw = apply_randomization(rng_, config_.randomization, config_.params,
                                    config_.episode_s, substep_dt);
  state_.phase = state_.draw.init_phase;

  // Nominal pose with initial pitch noise; base height set so the lowest
  // foot starts exactly on the ground.
  state_.q[2] = state_.draw.init_pitch;
  for (int j = 0; j < kNumJoints; ++j) state_.q[kBaseDof + j] = config_.params.q_nominal[j];
  state_.q[1] = 0.0;
  const Dynamics dyn = compute_dynamics();
  const double lowest = std::min(dyn.foot[0].pos.y(), dyn.foot[1].pos.y());
  state_.q[1] = -lowest;

  episode_horizon_steps_ = horizon_steps();
  if (!first_reset_done_ && config_.randomization.enabled &&
      config_.randomization.stagger_first_episode) {
    // Stagger the very first episode so parallel instances do not all hit
    // the horizon in the same iteration.
    episode_horizon_steps_ = std::max(50, rng_.uniform_int(std::max(51, horizon_steps())));
  }
  first_reset_done_ = true;

  last_terms_ = RewardTerms{};
  last_torque_.setZero();
  pending_action_.setZero();
  mean_vx_ = 0.0;
  last_push_fx_ = last_push_fz_ = 0.0;
  refresh_obs_cache();
}

Vec BipedEnv::active_action(const Vec& commanded, int substep_index) const {
  return substep_index < state_.draw.action_delay_substeps ? pending_action_ : commanded;
}

void BipedEnv::substep(const Vec& joint_torque) {
  const double dt = config_.control_dt / config_.substeps;
  const PhysicalParams& pp = config_.params;

  // Velocity impulse events fire at their exact substep.
  for (const auto& imp : state_.draw.impulses)
    if (imp.substep == state_.substep_count) {
      state_.qd[0] += imp.dvx;
      state_.qd[1] += imp.dvz;
    }

  Dynamics dyn = compute_dynamics();

  // Actuation.
  for (int j = 0; j < kNumJoints; ++j) dyn.rhs[kBaseDof + j] += joint_torque[j];

  // Ground contact: spring-damper normal force; anchored spring-damper
  // tangential force with a Coulomb slip cap, so static friction holds.
  // Restitution reduces the normal damping.
  const double c_normal = pp.ground_damping * (1.0 - state_.draw.restitution);
  for (int f = 0; f < kNumFeet; ++f) {
    const auto fi = static_cast<std::size_t>(f);
    const ChainPoint& foot = dyn.foot[f];
    double fn = 0.0, ft = 0.0;
    if (foot.pos.y() < 0.0) {
      fn = pp.ground_stiffness * (-foot.pos.y()) - c_normal * foot.vel.y();
      fn = std::max(0.0, fn);
    }
    if (fn > 0.0) {
      if (!state_.friction_anchored[fi]) {
        state_.friction_anchored[fi] = true;
        state_.friction_anchor_x[fi] = foot.pos.x();
      }
      const double cap = state_.draw.friction * fn;
      const double raw = -pp.ground_tangent_stiffness *
                             (foot.pos.x() - state_.friction_anchor_x[fi]) -
                         pp.ground_tangent_damping * foot.vel.x();
      ft = std::clamp(raw, -cap, cap);
      if (raw != ft) {
        // Slipping: drag the anchor along so the spring holds at the cap.
        state_.friction_anchor_x[fi] =
            foot.pos.x() +
            (ft + pp.ground_tangent_damping * foot.vel.x()) / pp.ground_tangent_stiffness;
      }
    } else {
      state_.friction_anchored[fi] = false;
    }
    state_.contact[f] = fn > 0.0;
    force_accum_[fi] += fn;
    if (fn > 0.0) dyn.rhs.noalias() += foot.jac.transpose() * Vector2d(ft, fn);
  }

  // External push forces act at the base point.
  for (const auto& push : state_.draw.pushes)
    if (push.substep == state_.substep_count) {
      dyn.rhs[0] += push.fx;
      dyn.rhs[1] += push.fz;
    }

  const Vec7 qdd = dyn.M.ldlt().solve(dyn.rhs);
  const Vec qd_new = state_.qd + dt * qdd;
  state_.q += 0.5 * dt * (state_.qd + qd_new);
  state_.qd = qd_new;

  // Hard joint stops.
  for (int j = 0; j < kNumJoints; ++j) {
    const int idx = kBaseDof + j;
    if (state_.q[idx] < pp.joint_lower[j]) {
      state_.q[idx] = pp.joint_lower[j];
      if (state_.qd[idx] < 0.0) state_.qd[idx] = 0.0;
    } else if (state_.q[idx] > pp.joint_upper[j]) {
      state_.q[idx] = pp.joint_upper[j];
      if (state_.qd[idx] > 0.0) state_.qd[idx] = 0.0;
    }
  }

  ++state_.substep_count;
}

StepOutput BipedEnv::step(const Vec& action) {
  if (action.size() != kNumJoints) throw std::invalid_argument("step: action size mismatch");
  const PhysicalParams& pp = config_.params;
  const double dt = config_.control_dt;

  // Clamp offsets before PD conversion.
  const Vec a = action.cwiseMax(-config_.action_clamp).cwiseMin(config_.action_clamp);

  const Vec kp = state_.draw.kp_factor * pp.kp;
  const Vec kd = state_.draw.kd_factor * pp.kd;

  double energy_acc = 0.0;
  double vx_acc = 0.0;
  double push_fx = 0.0, push_fz = 0.0;
  force_accum_ = {0.0, 0.0};
  for (int s = 0; s < config_.substeps; ++s) {
    const Vec act = active_action(a, s);
    const Vec q_j = state_.q.segment(kBaseDof, kNumJoints);
    const Vec qd_j = state_.qd.segment(kBaseDof, kNumJoints);
    Vec tau = pd_torque(act, q_j, qd_j, kp, kd, pp.q_nominal, pp.torque_limit);
    tau *= state_.draw.motor_strength;
    energy_acc += energy_cost(tau, qd_j);
    for (const auto& push : state_.draw.pushes)
      if (push.substep == state_.substep_count) {
        push_fx = push.fx;
        push_fz = push.fz;
      }
    substep(tau);
    last_torque_ = tau;
    vx_acc += state_.qd[0];
  }
  mean_vx_ = vx_acc / config_.substeps;
  for (int f = 0; f < kNumFeet; ++f)
    state_.contact_force[static_cast<std::size_t>(f)] =
        force_accum_[static_cast<std::size_t>(f)] / config_.substeps;
  last_push_fx_ = push_fx;
  last_push_fz_ = push_fz;

  state_.phase += 2.0 * M_PI * config_.gait_frequency_hz * dt;
  state_.time_s += dt;
  ++state_.control_step;

  // Touchdown bookkeeping at control rate.
  double air_time_reward = 0.0;
  for (int f = 0; f < kNumFeet; ++f) {
    if (state_.contact[f]) {
      if (state_.air_time[f] > 0.0) air_time_reward += std::min(state_.air_time[f], 0.5);
      state_.air_time[f] = 0.0;
    } else {
      state_.air_time[f] += dt;
    }
  }

  // Reward terms (planar subset).
  const auto sched = scheduled_stance();
  RewardTerms terms;
  {
    const double verr = mean_vx_ - config_.v_cmd;
    terms.tracking_lin_vel = std::exp(-10.0 * verr * verr);
    terms.foot_air_time = air_time_reward;
    double cv = 0.0, clear = 0.0, cn = 0.0, cf = 0.0;
    for (int f = 0; f < kNumFeet; ++f) {
      const Vector2d pf = foot_position(f);
      const Vector2d vf = foot_velocity(f);
      if (state_.contact[f]) cv += std::sqrt(vf.norm());
      if (!sched[static_cast<std::size_t>(f)] &&
          std::abs(pf.y() - config_.target_foot_clearance) < config_.clearance_tolerance)
        clear += 1.0;
      if (state_.contact[f] == sched[static_cast<std::size_t>(f)]) cn += 1.0;
      cf += std::max(0.0, state_.contact_force[f] - config_.max_contact_force);
    }
    terms.foot_contact_velocity = cv;
    terms.foot_clearance = clear;
    terms.foot_contact_number = cn / kNumFeet;
    terms.base_orientation = std::exp(-10.0 * state_.q[2] * state_.q[2]);
    terms.foot_contact_force = cf;
    const double herr = state_.q[1] - base_height_target();
    terms.base_height = std::exp(-100.0 * herr * herr);
    terms.action_smoothness = (a - state_.last_action).squaredNorm() +
                              (a - 2.0 * state_.last_action + state_.prev_action).squaredNorm() +
                              0.05 * a.norm();
  }
  last_terms_ = terms;

  StepOutput out;
  out.reward = terms.weighted_sum(config_.reward_scales);
  out.cost_channels = Vec::Zero(num_cost_channels());
  out.cost_channels[0] = energy_acc / config_.substeps;  // mean |tau*qd| in W
  // Channel 1 (mirror) is policy-functional and filled by the collector.
  if (config_.enable_aux_costs) out.cost_channels.tail(3) = aux_costs();

  state_.prev_action = state_.last_action;
  state_.last_action = a;
  pending_action_ = a;

  const bool finite = state_.q.allFinite() && state_.qd.allFinite();
  const bool fell = !finite || std::abs(state_.q[2]) > config_.fall_pitch ||
                    state_.q[1] < config_.fall_height_frac * pp.nominal_base_height();
  const bool horizon = state_.control_step >= episode_horizon_steps_;
  out.failure = !finite;
  out.done = fell || horizon;
  out.truncated = horizon && !fell;
  refresh_obs_cache();
  return out;
}

Vec BipedEnv::obs_scales() {
  Vec s = Vec::Ones(17);
  s[0] = kScaleCmd;
  for (int j = 0; j < kNumJoints; ++j) s[3 + j] = kScaleJointPos;
  for (int j = 0; j < kNumJoints; ++j) s[7 + j] = kScaleJointVel;
  s[11] = kScalePitchRate;
  s[16] = kScalePitch;
  return s;
}

std::array<bool, kNumFeet> BipedEnv::scheduled_stance() const {
  // 50% duty square wave, legs half a period apart.
  const double s = std::sin(state_.phase);
  return {s >= 0.0, s < 0.0};
}

Eigen::Vector2d BipedEnv::foot_position(int foot) const {
  const PhysicalParams& pp = config_.params;
  const int h = foot == 0 ? 3 : 5;
  const int k = foot == 0 ? 4 : 6;
  ChainPoint p = ChainPoint::base_point(state_.q, state_.qd);
  p.add_offset(state_.q, state_.qd, {2, h}, {0.0, -pp.upper_length});
  p.add_offset(state_.q, state_.qd, {2, h, k}, {0.0, -pp.lower_length});
  return p.pos;
}

Eigen::Vector2d BipedEnv::foot_velocity(int foot) const {
  const PhysicalParams& pp = config_.params;
  const int h = foot == 0 ? 3 : 5;
  const int k = foot == 0 ? 4 : 6;
  ChainPoint p = ChainPoint::base_point(state_.q, state_.qd);
  p.add_offset(state_.q, state_.qd, {2, h}, {0.0, -pp.upper_length});
  p.add_offset(state_.q, state_.qd, {2, h, k}, {0.0, -pp.lower_length});
  return p.vel;
}

bool segments_cross(const Vector2d& a0, const Vector2d& a1, const Vector2d& b0,
                    const Vector2d& b1) {
  auto orient = [](const Vector2d& p, const Vector2d& q, const Vector2d& r) {
    return (q.x() - p.x()) * (r.y() - p.y()) - (q.y() - p.y()) * (r.x() - p.x());
  };
  const double d1 = orient(b0, b1, a0);
  const double d2 = orient(b0, b1, a1);
  const double d3 = orient(a0, a1, b0);
  const double d4 = orient(a0, a1, b1);
  // Strict signs only: shared endpoints and touching do not count.
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

Vec BipedEnv::aux_costs() const {
  const PhysicalParams& pp = config_.params;
  Vec c = Vec::Zero(3);
  const auto sched = scheduled_stance();
  for (int f = 0; f < kNumFeet; ++f) {
    const Vector2d pf = foot_position(f);
    const Vector2d vf = foot_velocity(f);
    if (!sched[static_cast<std::size_t>(f)])
      c[0] += std::abs(pf.y() - config_.target_foot_clearance);
    if (state_.contact[f]) c[1] += std::sqrt(vf.norm());
  }
  // Self-collision: any thigh/shank of one leg crossing the other leg.
  const Vector2d hip(state_.q[0], state_.q[1]);
  Vector2d knee[2], foot[2];
  for (int leg = 0; leg < 2; ++leg) {
    const int h = leg == 0 ? 3 : 5;
    const int k = leg == 0 ? 4 : 6;
    ChainPoint kp = ChainPoint::base_point(state_.q, state_.qd);
    kp.add_offset(state_.q, state_.qd, {2, h}, {0.0, -pp.upper_length});
    knee[leg] = kp.pos;
    kp.add_offset(state_.q, state_.qd, {2, h, k}, {0.0, -pp.lower_length});
    foot[leg] = kp.pos;
  }
  const bool collide = segments_cross(hip, knee[0], hip, knee[1]) ||
                       segments_cross(hip, knee[0], knee[1], foot[1]) ||
                       segments_cross(knee[0], foot[0], hip, knee[1]) ||
                       segments_cross(knee[0], foot[0], knee[1], foot[1]);
  c[2] = collide ? 1.0 : 0.0;
  return c;
}

Vec BipedEnv::obs_frame() const { return obs_cache_; }

void BipedEnv::refresh_obs_cache() {
  const DomainRandomizationConfig& rc = config_.randomization;
  Rng& rng = rng_;
  const bool noisy = rc.enabled;
  Vec f(obs_frame_dim());
  f[0] = config_.v_cmd * kScaleCmd;
  f[1] = std::sin(state_.phase);
  f[2] = std::cos(state_.phase);
  for (int j = 0; j < kNumJoints; ++j) {
    const double nq = noisy ? rng.normal(0.0, rc.noise_joint_pos) : 0.0;
    f[3 + j] = (state_.q[kBaseDof + j] - config_.params.q_nominal[j] + nq) * kScaleJointPos;
  }
  for (int j = 0; j < kNumJoints; ++j) {
    const double nv = noisy ? rng.normal(0.0, rc.noise_joint_vel) : 0.0;
    f[7 + j] = (state_.qd[kBaseDof + j] + nv) * kScaleJointVel;
  }
  f[11] = (state_.qd[2] + (noisy ? rng.normal(0.0, rc.noise_pitch_rate) : 0.0)) * kScalePitchRate;
  for (int j = 0; j < kNumJoints; ++j) f[12 + j] = state_.last_action[j];
  f[16] = (state_.q[2] + (noisy ? rng.normal(0.0, rc.noise_pitch) : 0.0)) * kScalePitch;
  obs_cache_ = std::move(f);
}

Vec BipedEnv::priv_frame() const {
  Vec f(priv_frame_dim());
  f[0] = config_.v_cmd * kScaleCmd;
  f[1] = std::sin(state_.phase);
  f[2] = std::cos(state_.phase);
  for (int j = 0; j < kNumJoints; ++j)
    f[3 + j] = (state_.q[kBaseDof + j] - config_.params.q_nominal[j]) * kScaleJointPos;
  for (int j = 0; j < kNumJoints; ++j) f[7 + j] = state_.qd[kBaseDof + j] * kScaleJointVel;
  f[11] = state_.qd[2] * kScalePitchRate;
  for (int j = 0; j < kNumJoints; ++j) f[12 + j] = state_.last_action[j];
  f[16] = state_.q[2] * kScalePitch;
  f[17] = state_.qd[0] * kScaleLinVel;
  f[18] = state_.qd[1] * kScaleLinVel;
  f[19] = last_push_fx_ * kScalePush;
  f[20] = last_push_fz_ * kScalePush;
  f[21] = 0.0;  // push torque slot; pushes act at the base point
  f[22] = state_.draw.friction;
  f[23] = state_.draw.payload;
  const auto sched = scheduled_stance();
  f[24] = sched[0] ? 1.0 : 0.0;
  f[25] = sched[1] ? 1.0 : 0.0;
  f[26] = state_.contact[0] ? 1.0 : 0.0;
  f[27] = state_.contact[1] ? 1.0 : 0.0;
  return f;
}

std::vector<std::pair<std::string, double>> BipedEnv::telemetry() const {
  std::vector<std::pair<std::string, double>> t;
  t.emplace_back("base_x", state_.q[0]);
  t.emplace_back("base_z", state_.q[1]);
  t.emplace_back("pitch", state_.q[2]);
  t.emplace_back("vx", state_.qd[0]);
  const char* names[kNumJoints] = {"hip_l", "knee_l", "hip_r", "knee_r"};
  for (int j = 0; j < kNumJoints; ++j) {
    t.emplace_back(std::string("q_") + names[j], state_.q[kBaseDof + j]);
    t.emplace_back(std::string("qd_") + names[j], state_.qd[kBaseDof + j]);
    t.emplace_back(std::string("tau_") + names[j], last_torque_[j]);
  }
  t.emplace_back("contact_force_l", state_.contact_force[0]);
  t.emplace_back("contact_force_r", state_.contact_force[1]);
  return t;
}

}  // namespace ecrl::env

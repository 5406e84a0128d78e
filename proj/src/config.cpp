#include "ecrl/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ecrl/checkpoint.hpp"

namespace ecrl::harness {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError(ctx + ": unknown key '" + item.key() + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) {
    try {
      out = j.at(key).get<T>();
    } catch (const json::exception& ex) {
      throw ConfigError(std::string("bad value for '") + key + "': " + ex.what());
    }
  }
}

void parse_physical(const json& j, env::PhysicalParams& p) {
  check_keys(j, {"torso_mass", "torso_length", "upper_mass", "upper_length", "lower_mass",
                 "lower_length", "torso_inertia", "upper_inertia", "lower_inertia", "kp", "kd",
                 "q_nominal", "joint_lower", "joint_upper", "torque_limit", "ground_stiffness",
                 "ground_damping", "ground_tangent_stiffness", "ground_tangent_damping", "friction", "restitution",
                 "gravity"},
             "env.params");
  get_if(j, "torso_mass", p.torso_mass);
  get_if(j, "torso_length", p.torso_length);
  get_if(j, "upper_mass", p.upper_mass);
  get_if(j, "upper_length", p.upper_length);
  get_if(j, "lower_mass", p.lower_mass);
  get_if(j, "lower_length", p.lower_length);
  get_if(j, "torso_inertia", p.torso_inertia);
  get_if(j, "upper_inertia", p.upper_inertia);
  get_if(j, "lower_inertia", p.lower_inertia);
  auto get_vec4 = [&](const char* key, netgrad::Vec& out) {
    if (!j.contains(key)) return;
    const auto values = j.at(key).get<std::vector<double>>();
    if (values.size() != static_cast<std::size_t>(env::kNumJoints))
      throw ConfigError(std::string(key) + " must have 4 entries");
    for (int i = 0; i < env::kNumJoints; ++i) out[i] = values[static_cast<std::size_t>(i)];
  };
  get_vec4("kp", p.kp);
  get_vec4("kd", p.kd);
  get_vec4("q_nominal", p.q_nominal);
  get_vec4("joint_lower", p.joint_lower);
  get_vec4("joint_upper", p.joint_upper);
  get_if(j, "torque_limit", p.torque_limit);
  get_if(j, "ground_stiffness", p.ground_stiffness);
  get_if(j, "ground_damping", p.ground_damping);
  get_if(j, "ground_tangent_stiffness", p.ground_tangent_stiffness);
  get_if(j, "ground_tangent_damping", p.ground_tangent_damping);
  get_if(j, "friction", p.friction);
  get_if(j, "restitution", p.restitution);
  get_if(j, "gravity", p.gravity);
}

void parse_randomization(const json& j, env::DomainRandomizationConfig& r) {
  check_keys(j, {"enabled", "payload_kg", "com_disp_m", "friction_lo", "friction_hi",
                 "restitution_lo", "restitution_hi", "motor_strength_lo", "motor_strength_hi",
                 "kp_factor_lo", "kp_factor_hi", "kd_factor_lo", "kd_factor_hi",
                 "action_delay_ms_max", "init_pitch_range", "randomize_initial_phase",
                 "stagger_first_episode", "noise_joint_pos", "noise_joint_vel",
                 "noise_pitch_rate", "noise_pitch", "push_interval_s", "push_force_n",
                 "push_duration_s", "impulse_interval_s", "impulse_dv"},
             "env.randomization");
  get_if(j, "enabled", r.enabled);
  get_if(j, "payload_kg", r.payload_kg);
  get_if(j, "com_disp_m", r.com_disp_m);
  get_if(j, "friction_lo", r.friction_lo);
  get_if(j, "friction_hi", r.friction_hi);
  get_if(j, "restitution_lo", r.restitution_lo);
  get_if(j, "restitution_hi", r.restitution_hi);
  get_if(j, "motor_strength_lo", r.motor_strength_lo);
  get_if(j, "motor_strength_hi", r.motor_strength_hi);
  get_if(j, "kp_factor_lo", r.kp_factor_lo);
  get_if(j, "kp_factor_hi", r.kp_factor_hi);
  get_if(j, "kd_factor_lo", r.kd_factor_lo);
  get_if(j, "kd_factor_hi", r.kd_factor_hi);
  get_if(j, "action_delay_ms_max", r.action_delay_ms_max);
  get_if(j, "init_pitch_range", r.init_pitch_range);
  get_if(j, "randomize_initial_phase", r.randomize_initial_phase);
  get_if(j, "stagger_first_episode", r.stagger_first_episode);
  get_if(j, "noise_joint_pos", r.noise_joint_pos);
  get_if(j, "noise_joint_vel", r.noise_joint_vel);
  get_if(j, "noise_pitch_rate", r.noise_pitch_rate);
  get_if(j, "noise_pitch", r.noise_pitch);
  get_if(j, "push_interval_s", r.push_interval_s);
  get_if(j, "push_force_n", r.push_force_n);
  get_if(j, "push_duration_s", r.push_duration_s);
  get_if(j, "impulse_interval_s", r.impulse_interval_s);
  get_if(j, "impulse_dv", r.impulse_dv);
}

void parse_reward_scales(const json& j, env::RewardScales& s) {
  check_keys(j, {"tracking_lin_vel", "foot_air_time", "foot_contact_velocity", "foot_clearance",
                 "foot_contact_number", "base_orientation", "foot_contact_force", "base_height",
                 "action_smoothness"},
             "env.reward_scales");
  get_if(j, "tracking_lin_vel", s.tracking_lin_vel);
  get_if(j, "foot_air_time", s.foot_air_time);
  get_if(j, "foot_contact_velocity", s.foot_contact_velocity);
  get_if(j, "foot_clearance", s.foot_clearance);
  get_if(j, "foot_contact_number", s.foot_contact_number);
  get_if(j, "base_orientation", s.base_orientation);
  get_if(j, "foot_contact_force", s.foot_contact_force);
  get_if(j, "base_height", s.base_height);
  get_if(j, "action_smoothness", s.action_smoothness);
}

void parse_biped(const json& j, env::BipedConfig& b) {
  check_keys(j, {"kind", "v_cmd", "control_dt", "substeps", "episode_s", "gait_frequency_hz",
                 "fall_pitch", "fall_height_frac", "base_height_target",
                 "target_foot_clearance", "clearance_tolerance", "max_contact_force",
                 "action_clamp", "enable_aux_costs", "obs_frames", "priv_frames", "params",
                 "randomization", "reward_scales"},
             "env");
  get_if(j, "v_cmd", b.v_cmd);
  get_if(j, "control_dt", b.control_dt);
  get_if(j, "substeps", b.substeps);
  get_if(j, "episode_s", b.episode_s);
  get_if(j, "gait_frequency_hz", b.gait_frequency_hz);
  get_if(j, "fall_pitch", b.fall_pitch);
  get_if(j, "fall_height_frac", b.fall_height_frac);
  get_if(j, "base_height_target", b.base_height_target);
  get_if(j, "target_foot_clearance", b.target_foot_clearance);
  get_if(j, "clearance_tolerance", b.clearance_tolerance);
  get_if(j, "max_contact_force", b.max_contact_force);
  get_if(j, "action_clamp", b.action_clamp);
  get_if(j, "enable_aux_costs", b.enable_aux_costs);
  get_if(j, "obs_frames", b.obs_frames);
  get_if(j, "priv_frames", b.priv_frames);
  if (j.contains("params")) parse_physical(j.at("params"), b.params);
  if (j.contains("randomization")) parse_randomization(j.at("randomization"), b.randomization);
  if (j.contains("reward_scales")) parse_reward_scales(j.at("reward_scales"), b.reward_scales);
}

void parse_toy(const json& j, env::ToyConfig& t) {
  check_keys(j, {"kind", "dt", "horizon", "v_cmd", "u_max", "drag_base", "drag_ramp", "v_knee",
                 "tracking_width", "band", "obs_frames", "v0_noise"},
             "env");
  get_if(j, "dt", t.dt);
  get_if(j, "horizon", t.horizon);
  get_if(j, "v_cmd", t.v_cmd);
  get_if(j, "u_max", t.u_max);
  get_if(j, "drag_base", t.drag_base);
  get_if(j, "drag_ramp", t.drag_ramp);
  get_if(j, "v_knee", t.v_knee);
  get_if(j, "tracking_width", t.tracking_width);
  get_if(j, "band", t.band);
  get_if(j, "obs_frames", t.obs_frames);
  get_if(j, "v0_noise", t.v0_noise);
}

cmdp::ConstraintSpec parse_constraint(const json& j, const ExperimentConfig& cfg) {
  check_keys(j, {"channel", "kind", "gamma_c", "threshold", "threshold_mean_power_w"},
             "constraint");
  cmdp::ConstraintSpec spec;
  get_if(j, "channel", spec.channel);
  std::string kind = "discounted_sum";
  get_if(j, "kind", kind);
  if (kind == "discounted_sum")
    spec.kind = cmdp::ConstraintKind::DiscountedSum;
  else if (kind == "batch_average")
    spec.kind = cmdp::ConstraintKind::BatchAverage;
  else
    throw ConfigError("unknown constraint kind: " + kind);
  get_if(j, "gamma_c", spec.gamma_c);
  if (j.contains("threshold") && j.contains("threshold_mean_power_w"))
    throw ConfigError("give either threshold or threshold_mean_power_w, not both");
  if (j.contains("threshold")) {
    spec.threshold_b = j.at("threshold").get<double>();
  } else if (j.contains("threshold_mean_power_w")) {
    // A steady power P has discounted return P / (1 - gamma_c); expressing
    // the budget in watts keeps the threshold physically readable.
    if (spec.kind != cmdp::ConstraintKind::DiscountedSum || !(spec.gamma_c < 1.0))
      throw ConfigError("threshold_mean_power_w needs a discounted-sum constraint, gamma_c < 1");
    spec.threshold_b = j.at("threshold_mean_power_w").get<double>() / (1.0 - spec.gamma_c);
  } else {
    throw ConfigError("constraint needs a threshold");
  }
  (void)cfg;
  return spec;
}

void parse_optimizer(const json& j, optimizers::OptimizerConfig& o) {
  check_keys(j, {"algo", "clip_c1", "clip_c2", "kappa_ipo", "kappa_p3o", "mu_e",
                 "mirror_loss_weight", "epochs", "minibatches", "entropy_coef", "actor_lr",
                 "critic_lr", "lambda_lr", "ratio_exp_bound", "target_critic_decay",
                 "freeze_multipliers"},
             "optimizer");
  if (j.contains("algo")) o.algo = optimizers::algo_from_name(j.at("algo").get<std::string>());
  get_if(j, "clip_c1", o.clip_c1);
  get_if(j, "clip_c2", o.clip_c2);
  get_if(j, "kappa_ipo", o.kappa_ipo);
  get_if(j, "kappa_p3o", o.kappa_p3o);
  get_if(j, "mu_e", o.mu_e);
  get_if(j, "mirror_loss_weight", o.mirror_loss_weight);
  get_if(j, "epochs", o.epochs);
  get_if(j, "minibatches", o.minibatches);
  get_if(j, "entropy_coef", o.entropy_coef);
  get_if(j, "actor_lr", o.actor_lr);
  get_if(j, "critic_lr", o.critic_lr);
  get_if(j, "lambda_lr", o.lambda_lr);
  get_if(j, "ratio_exp_bound", o.ratio_exp_bound);
  get_if(j, "target_critic_decay", o.target_critic_decay);
  get_if(j, "freeze_multipliers", o.freeze_multipliers);
}

void parse_training(const json& j, TrainingConfig& t) {
  check_keys(j, {"num_envs", "steps_per_env", "iterations", "gamma_reward", "gae_lambda",
                 "reward_scale", "checkpoint_every", "episode_stat_window", "actor_hidden", "critic_hidden",
                 "init_log_std", "activation"},
             "training");
  get_if(j, "num_envs", t.num_envs);
  get_if(j, "steps_per_env", t.steps_per_env);
  get_if(j, "iterations", t.iterations);
  get_if(j, "gamma_reward", t.gamma_reward);
  get_if(j, "gae_lambda", t.gae_lambda);
  get_if(j, "reward_scale", t.reward_scale);
  get_if(j, "checkpoint_every", t.checkpoint_every);
  get_if(j, "episode_stat_window", t.episode_stat_window);
  get_if(j, "actor_hidden", t.actor_hidden);
  get_if(j, "critic_hidden", t.critic_hidden);
  get_if(j, "init_log_std", t.init_log_std);
  if (j.contains("activation"))
    t.activation = netgrad::activation_from_name(j.at("activation").get<std::string>());
}

void parse_stability(const json& j, StabilityCriterion& s) {
  check_keys(j, {"kind", "limit", "window", "eval_episodes"}, "stability");
  get_if(j, "kind", s.kind);
  get_if(j, "limit", s.limit);
  get_if(j, "window", s.window);
  get_if(j, "eval_episodes", s.eval_episodes);
}

}  // namespace

void TrainingConfig::validate() const {
  if (num_envs <= 0 || steps_per_env <= 0) throw ConfigError("need positive env/step counts");
  if (iterations < 0) throw ConfigError("iterations must be nonnegative");
  if (!(gamma_reward >= 0.0 && gamma_reward <= 1.0)) throw ConfigError("bad gamma_reward");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("bad gae_lambda");
  if (episode_stat_window <= 0) throw ConfigError("episode_stat_window must be positive");
  if (actor_hidden.empty() || critic_hidden.empty()) throw ConfigError("empty hidden layers");
}

void ExperimentConfig::validate() const {
  if (env_kind != "biped" && env_kind != "toy") throw ConfigError("unknown env kind " + env_kind);
  if (env_kind == "biped") biped.validate();
  if (env_kind == "toy") toy.validate();
  training.validate();
  optimizer.validate(constraints.size());
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  const int channels = env_kind == "biped" ? (biped.enable_aux_costs ? 5 : 2) : 2;
  for (const auto& spec : constraints) {
    spec.validate();
    if (spec.channel < 0 || spec.channel >= channels)
      throw ConfigError("constraint channel out of range");
  }
}

std::unique_ptr<env::Env> ExperimentConfig::make_env(std::uint64_t seed) const {
  if (env_kind == "biped") return std::make_unique<env::BipedEnv>(biped, seed);
  if (env_kind == "toy") return std::make_unique<env::ToyEnv>(toy, seed);
  throw ConfigError("unknown env kind " + env_kind);
}

ExperimentConfig ExperimentConfig::with_algorithm(const std::string& name) const {
  ExperimentConfig out = *this;
  const auto it = algorithm_overrides.find(name);
  if (it != algorithm_overrides.end()) {
    const json patch = json::parse(it->second);
    parse_optimizer(patch, out.optimizer);
  } else {
    out.optimizer.algo = optimizers::algo_from_name(name);
  }
  return out;
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("config parse error: ") + ex.what());
  }
  check_keys(j, {"env", "constraints", "optimizer", "training", "stability", "seeds",
                 "algorithms"},
             "config");
  ExperimentConfig cfg;
  if (j.contains("env")) {
    const json& je = j.at("env");
    std::string kind = "biped";
    get_if(je, "kind", kind);
    cfg.env_kind = kind;
    if (kind == "biped")
      parse_biped(je, cfg.biped);
    else if (kind == "toy")
      parse_toy(je, cfg.toy);
    else
      throw ConfigError("unknown env kind " + kind);
  }
  if (j.contains("constraints")) {
    for (const auto& jc : j.at("constraints")) cfg.constraints.push_back(parse_constraint(jc, cfg));
  }
  if (j.contains("optimizer")) parse_optimizer(j.at("optimizer"), cfg.optimizer);
  if (j.contains("training")) parse_training(j.at("training"), cfg.training);
  if (j.contains("stability")) parse_stability(j.at("stability"), cfg.stability);
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("algorithms")) {
    for (const auto& item : j.at("algorithms").items())
      cfg.algorithm_overrides[item.key()] = item.value().dump();
  }
  try {
    cfg.validate();
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  json je;
  je["kind"] = cfg.env_kind;
  if (cfg.env_kind == "biped") {
    const auto& b = cfg.biped;
    je["v_cmd"] = b.v_cmd;
    je["control_dt"] = b.control_dt;
    je["substeps"] = b.substeps;
    je["episode_s"] = b.episode_s;
    je["gait_frequency_hz"] = b.gait_frequency_hz;
    je["fall_pitch"] = b.fall_pitch;
    je["fall_height_frac"] = b.fall_height_frac;
    je["base_height_target"] = b.base_height_target;
    je["target_foot_clearance"] = b.target_foot_clearance;
    je["clearance_tolerance"] = b.clearance_tolerance;
    je["max_contact_force"] = b.max_contact_force;
    je["action_clamp"] = b.action_clamp;
    je["enable_aux_costs"] = b.enable_aux_costs;
    je["obs_frames"] = b.obs_frames;
    je["priv_frames"] = b.priv_frames;
    json rnd;
    rnd["enabled"] = b.randomization.enabled;
    je["randomization"] = rnd;
  } else {
    const auto& t = cfg.toy;
    je["dt"] = t.dt;
    je["horizon"] = t.horizon;
    je["v_cmd"] = t.v_cmd;
    je["u_max"] = t.u_max;
    je["drag_base"] = t.drag_base;
    je["drag_ramp"] = t.drag_ramp;
    je["v_knee"] = t.v_knee;
    je["tracking_width"] = t.tracking_width;
    je["band"] = t.band;
    je["obs_frames"] = t.obs_frames;
    je["v0_noise"] = t.v0_noise;
  }
  j["env"] = je;
  json jcs = json::array();
  for (const auto& spec : cfg.constraints) {
    json jc;
    jc["channel"] = spec.channel;
    jc["kind"] = spec.kind == cmdp::ConstraintKind::DiscountedSum ? "discounted_sum"
                                                                  : "batch_average";
    jc["gamma_c"] = spec.gamma_c;
    jc["threshold"] = spec.threshold_b;
    jcs.push_back(jc);
  }
  j["constraints"] = jcs;
  json jo;
  jo["algo"] = optimizers::algo_name(cfg.optimizer.algo);
  jo["clip_c1"] = cfg.optimizer.clip_c1;
  jo["clip_c2"] = cfg.optimizer.clip_c2;
  jo["mu_e"] = cfg.optimizer.mu_e;
  jo["mirror_loss_weight"] = cfg.optimizer.mirror_loss_weight;
  jo["epochs"] = cfg.optimizer.epochs;
  jo["minibatches"] = cfg.optimizer.minibatches;
  jo["entropy_coef"] = cfg.optimizer.entropy_coef;
  jo["actor_lr"] = cfg.optimizer.actor_lr;
  jo["critic_lr"] = cfg.optimizer.critic_lr;
  jo["lambda_lr"] = cfg.optimizer.lambda_lr;
  if (!cfg.optimizer.kappa_ipo.empty()) jo["kappa_ipo"] = cfg.optimizer.kappa_ipo;
  if (!cfg.optimizer.kappa_p3o.empty()) jo["kappa_p3o"] = cfg.optimizer.kappa_p3o;
  j["optimizer"] = jo;
  json jt;
  jt["num_envs"] = cfg.training.num_envs;
  jt["steps_per_env"] = cfg.training.steps_per_env;
  jt["iterations"] = cfg.training.iterations;
  jt["gamma_reward"] = cfg.training.gamma_reward;
  jt["gae_lambda"] = cfg.training.gae_lambda;
  jt["reward_scale"] = cfg.training.reward_scale;
  jt["checkpoint_every"] = cfg.training.checkpoint_every;
  jt["episode_stat_window"] = cfg.training.episode_stat_window;
  jt["actor_hidden"] = cfg.training.actor_hidden;
  jt["critic_hidden"] = cfg.training.critic_hidden;
  jt["init_log_std"] = cfg.training.init_log_std;
  jt["activation"] = netgrad::activation_name(cfg.training.activation);
  j["training"] = jt;
  json js;
  js["kind"] = cfg.stability.kind;
  js["limit"] = cfg.stability.limit;
  js["window"] = cfg.stability.window;
  js["eval_episodes"] = cfg.stability.eval_episodes;
  j["stability"] = js;
  j["seeds"] = cfg.seeds;
  return j.dump(2);
}

}  // namespace ecrl::harness

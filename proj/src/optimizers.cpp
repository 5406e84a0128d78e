#include "ecrl/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ecrl::optimizers {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
constexpr int kMirrorChannel = 1;  // channel carrying the policy-functional mirror cost
constexpr double kSlackFloor = 1e-9;  // barrier guard, never log a nonpositive slack

double kappa_at(const std::vector<double>& kappas, std::size_t i) {
  if (kappas.empty()) return 1.0;
  return kappas.at(i);
}
}  // namespace

std::string algo_name(Algo a) {
  switch (a) {
    case Algo::PPO: return "ppo";
    case Algo::PPOLag: return "ppolag";
    case Algo::CRPO: return "crpo";
    case Algo::IPO: return "ipo";
    case Algo::P3O: return "p3o";
  }
  return "?";
}

Algo algo_from_name(const std::string& name) {
  if (name == "ppo") return Algo::PPO;
  if (name == "ppolag") return Algo::PPOLag;
  if (name == "crpo") return Algo::CRPO;
  if (name == "ipo") return Algo::IPO;
  if (name == "p3o") return Algo::P3O;
  throw std::invalid_argument("unknown algorithm: " + name);
}

void OptimizerConfig::validate(std::size_t num_constraints) const {
  if (!(clip_c1 > 0.0 && clip_c1 < 1.0 && clip_c2 > 1.0))
    throw std::invalid_argument("clip bounds must satisfy 0 < c1 < 1 < c2");
  if (mu_e > 0.0) throw std::invalid_argument("mu_e must be <= 0");
  if (epochs <= 0 || minibatches <= 0)
    throw std::invalid_argument("epochs and minibatches must be positive");
  auto check_kappas = [&](const std::vector<double>& k, const char* what) {
    if (!k.empty() && k.size() != num_constraints)
      throw std::invalid_argument(std::string(what) + ": per-constraint size mismatch");
    for (double v : k)
      if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
  };
  if (algo == Algo::IPO) check_kappas(kappa_ipo, "kappa_ipo");
  if (algo == Algo::P3O) check_kappas(kappa_p3o, "kappa_p3o");
}

LagrangeState LagrangeState::make(int num_constraints, double beta) {
  LagrangeState s;
  s.lambda = Vec::Zero(num_constraints);
  AdamConfig cfg;
  cfg.lr = beta;
  for (int i = 0; i < num_constraints; ++i) s.opts.emplace_back(cfg, 1);
  return s;
}

double ppo_surrogate(const Vec& ratios, const Vec& advantages, double c1, double c2) {
  if (ratios.size() == 0) throw std::invalid_argument("ppo_surrogate: empty batch");
  if (ratios.size() != advantages.size())
    throw std::invalid_argument("ppo_surrogate: length mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ratios.size(); ++i) {
    const double r = ratios[i];
    const double rc = std::clamp(r, c1, c2);
    acc += std::min(r * advantages[i], rc * advantages[i]);
  }
  return acc / static_cast<double>(ratios.size());
}

double critic_loss(const Vec& values, const Vec& target_values, const Vec& returns,
                   double clip_lo, double clip_hi) {
  if (values.size() != target_values.size() || values.size() != returns.size())
    throw std::invalid_argument("critic_loss: length mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double e1 = values[i] - returns[i];
    const double clipped = std::clamp(target_values[i] - values[i], clip_lo, clip_hi);
    const double e2 = target_values[i] + clipped - returns[i];
    acc += std::max(e1 * e1, e2 * e2);
  }
  return values.size() > 0 ? acc / static_cast<double>(values.size()) : 0.0;
}

void dual_update(LagrangeState& lag, const Vec& j_c,
                 const std::vector<ConstraintSpec>& specs) {
  if (lag.size() != static_cast<int>(specs.size()) || j_c.size() != lag.size())
    throw std::invalid_argument("dual_update: size mismatch");
  for (int i = 0; i < lag.size(); ++i) {
    // Ascends lambda on violation: the dual minimizes L over lambda >= 0 and
    // dL/dlambda = -(j_c - b).
    const double grad = -cmdp::violation(specs[static_cast<std::size_t>(i)], j_c[i]);
    lag.opts[static_cast<std::size_t>(i)].step_scalar(lag.lambda[i], grad);
    if (lag.lambda[i] < 0.0) lag.lambda[i] = 0.0;
  }
}

int crpo_select(const Vec& j_c, const std::vector<ConstraintSpec>& specs, Rng& rng) {
  std::vector<int> violated;
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (cmdp::violation(specs[i], j_c[static_cast<Eigen::Index>(i)]) > 0.0)
      violated.push_back(static_cast<int>(i));
  if (violated.empty()) return -1;
  return violated[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(violated.size())))];
}

Vec ppo_penalty_reward(const Vec& rewards, const Vec& instant_energy, double mu_e) {
  if (mu_e > 0.0) throw std::invalid_argument("ppo_penalty_reward: mu_e must be <= 0");
  if (rewards.size() != instant_energy.size())
    throw std::invalid_argument("ppo_penalty_reward: length mismatch");
  if (mu_e == 0.0) return rewards;
  return rewards + mu_e * instant_energy;
}

ActorCritic ActorCritic::make(GaussianPolicy pi, RewardCritic critic, double actor_lr,
                              double critic_lr) {
  ActorCritic ac;
  ac.pi = std::move(pi);
  ac.critic = std::move(critic);
  ac.target_critic = ac.critic.value_net;
  const std::size_t actor_n = ac.pi.mean_net.num_params() +
                              static_cast<std::size_t>(ac.pi.log_std.size());
  AdamConfig acfg;
  acfg.lr = actor_lr;
  ac.actor_opt = Adam(acfg, actor_n);
  AdamConfig ccfg;
  ccfg.lr = critic_lr;
  ac.critic_opt = Adam(ccfg, ac.critic.value_net.num_params());
  return ac;
}

ObjectiveMode decide_mode(const OptimizerConfig& cfg, const std::vector<ConstraintSpec>& specs,
                          const Vec& jc_estimates, Rng& rng) {
  ObjectiveMode mode;
  if (cfg.algo == Algo::CRPO) {
    mode.selected = crpo_select(jc_estimates, specs, rng);
    mode.recovery = mode.selected >= 0;
  } else if (cfg.algo == Algo::IPO) {
    // The log barrier needs strict feasibility of every constraint.
    const int sel = crpo_select(jc_estimates, specs, rng);
    bool feasible = true;
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (specs[i].threshold_b - jc_estimates[static_cast<Eigen::Index>(i)] <= 0.0)
        feasible = false;
    if (!feasible) {
      mode.recovery = true;
      mode.selected = sel;
    }
  } else if (cfg.algo == Algo::P3O) {
    mode.epsilon = Vec(static_cast<Eigen::Index>(specs.size()));
    for (std::size_t i = 0; i < specs.size(); ++i)
      mode.epsilon[static_cast<Eigen::Index>(i)] =
          cmdp::violation(specs[i], jc_estimates[static_cast<Eigen::Index>(i)]);
  }
  return mode;
}

Mat gather_rows(const Mat& M, const std::vector<int>& rows) {
  Mat out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
  return out;
}

Vec gather(const Vec& v, const std::vector<int>& rows) {
  Vec out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

namespace {

struct MinibatchView {
  Mat obs, obs_mirrored, actions;
  Vec old_log_prob, advantages;
  Mat cost_to_go, inst_costs;
};

// Per-sample constraint term node for constraint i: a tape column (B x 1).
// DiscountedSum channels use the Monte-Carlo cost-to-go; the BatchAverage
// mirror channel uses the differentiable C2 under the current parameters;
// other BatchAverage channels use the logged instantaneous cost.
int constraint_term(Tape& tape, const ConstraintSpec& spec, const MinibatchView& mb,
                    int c2_node) {
  if (spec.kind == ConstraintKind::BatchAverage && spec.channel == kMirrorChannel) {
    if (c2_node < 0) throw std::invalid_argument("mirror constraint requires mirrored obs");
    return c2_node;
  }
  if (spec.kind == ConstraintKind::DiscountedSum)
    return tape.constant(mb.cost_to_go.col(spec.channel));
  return tape.constant(mb.inst_costs.col(spec.channel));
}

}  // namespace

ActorGraph build_actor_objective(Tape& tape, const OptimizerConfig& cfg,
                                 const std::vector<ConstraintSpec>& specs,
                                 const Vec& lambda, const ObjectiveMode& mode,
                                 const UpdateBatch& batch, const std::vector<int>& rows,
                                 const GaussianPolicy& pi, NetGrads* mean_grads,
                                 Mat* log_std_grad) {
  const int n = pi.action_dim();
  const double c1 = cfg.clip_c1;
  const double c2 = cfg.clip_c2;

  const bool wants_mirror =
      cfg.mirror_loss_weight > 0.0 ||
      std::any_of(specs.begin(), specs.end(), [](const ConstraintSpec& s) {
        return s.kind == ConstraintKind::BatchAverage && s.channel == kMirrorChannel;
      });

  MinibatchView mb;
  mb.obs = gather_rows(batch.obs, rows);
  mb.actions = gather_rows(batch.actions, rows);
  mb.old_log_prob = gather(batch.old_log_prob, rows);
  mb.advantages = gather(batch.advantages, rows);
  if (batch.cost_to_go.size() > 0) mb.cost_to_go = gather_rows(batch.cost_to_go, rows);
  if (batch.inst_costs.size() > 0) mb.inst_costs = gather_rows(batch.inst_costs, rows);
  if (wants_mirror) {
    if (batch.obs_mirrored.size() == 0)
      throw std::invalid_argument("mirror term requested but batch has no mirrored obs");
    mb.obs_mirrored = gather_rows(batch.obs_mirrored, rows);
  }

  // Probability ratio under the current parameters.
  const int x = tape.constant(mb.obs);
  const int mean = netgrad::forward_on_tape(tape, pi.mean_net, mean_grads, x);
  const int ls = tape.param(pi.log_std.transpose(), log_std_grad);
  const int diff = tape.sub(tape.constant(mb.actions), mean);
  const int inv_sigma = tape.exp_op(tape.scale(ls, -1.0));
  const int z = tape.mul_rowvec(diff, inv_sigma);
  const int quad = tape.row_sum(tape.square(z));
  const int sum_ls = tape.sum_all(ls);
  const int logp = tape.add_const(
      tape.add_scalar(tape.scale(quad, -0.5), tape.scale(sum_ls, -1.0)),
      -0.5 * static_cast<double>(n) * kLog2Pi);
  const int dlp = tape.clamp(tape.sub(logp, tape.constant(mb.old_log_prob)),
                             -cfg.ratio_exp_bound, cfg.ratio_exp_bound);
  const int ratio = tape.exp_op(dlp);

  const int adv = tape.constant(mb.advantages);
  const int surr = tape.mean_all(
      tape.min_op(tape.mul(ratio, adv), tape.mul(tape.clamp(ratio, c1, c2), adv)));
  const int entropy = tape.add_const(
      sum_ls, 0.5 * static_cast<double>(n) * (1.0 + kLog2Pi));

  // Mirror-symmetry distance with stop-gradient on the unmirrored branch.
  int c2_node = -1;
  if (wants_mirror) {
    const int xm = tape.constant(mb.obs_mirrored);
    const int mean_m = netgrad::forward_on_tape(tape, pi.mean_net, mean_grads, xm);
    const int mirrored = tape.signed_permute_cols(mean_m, batch.action_mirror.src,
                                                  batch.action_mirror.sign);
    c2_node = tape.row_sum(tape.square(tape.sub(tape.stop_gradient(mean), mirrored)));
  }

  ActorGraph g;
  g.parts.penalties = Vec::Zero(static_cast<Eigen::Index>(specs.size()));
  g.parts.recovery_path = mode.recovery;
  g.parts.selected_constraint = mode.selected;

  if (mode.recovery) {
    // Descend the selected violated constraint's cost alone.
    const ConstraintSpec& spec = specs.at(static_cast<std::size_t>(mode.selected));
    const int term = constraint_term(tape, spec, mb, c2_node);
    const int jc = tape.mean_all(tape.mul(ratio, term));
    int obj = tape.scale(jc, -1.0);
    obj = tape.add(obj, tape.scale(entropy, cfg.entropy_coef));
    g.objective = obj;
    g.parts.penalties[mode.selected] = tape.scalar(jc);
    g.parts.surrogate = 0.0;
    g.parts.entropy = tape.scalar(entropy);
    g.parts.total = tape.scalar(obj);
    return g;
  }

  int obj = surr;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const int term = constraint_term(tape, specs[i], mb, c2_node);
    const int jc = tape.mean_all(tape.mul(ratio, term));
    switch (cfg.algo) {
      case Algo::PPO:
        g.parts.penalties[ii] = 0.0;
        break;
      case Algo::CRPO:
        g.parts.penalties[ii] = 0.0;  // feasible path: pure reward objective
        break;
      case Algo::PPOLag: {
        const int pen = tape.scale(jc, lambda[ii]);
        obj = tape.sub(obj, pen);
        g.parts.penalties[ii] = tape.scalar(pen);
        break;
      }
      case Algo::IPO: {
        const int slack = tape.add_const(tape.scale(jc, -1.0), specs[i].threshold_b);
        if (tape.scalar(slack) <= kSlackFloor) {
          // Slack collapsed mid-iteration; descend this constraint for the
          // minibatch rather than taking an undefined log. Gradients only
          // flow from the returned objective, so the nodes built so far are
          // inert.
          ObjectiveMode rec;
          rec.recovery = true;
          rec.selected = static_cast<int>(i);
          return build_actor_objective(tape, cfg, specs, lambda, rec, batch, rows, pi,
                                       mean_grads, log_std_grad);
        }
        const int barrier = tape.scale(tape.log_op(slack), kappa_at(cfg.kappa_ipo, i));
        obj = tape.add(obj, barrier);
        g.parts.penalties[ii] = -tape.scalar(barrier);
        break;
      }
      case Algo::P3O: {
        const double eps = mode.epsilon.size() > ii ? mode.epsilon[ii] : 0.0;
        const int pen = tape.scale(tape.relu(tape.add_const(jc, eps)),
                                   kappa_at(cfg.kappa_p3o, i));
        obj = tape.sub(obj, pen);
        g.parts.penalties[ii] = tape.scalar(pen);
        break;
      }
    }
  }

  if (cfg.mirror_loss_weight > 0.0) {
    const int aux = tape.mean_all(c2_node);
    obj = tape.sub(obj, tape.scale(aux, cfg.mirror_loss_weight));
    g.parts.aux_mirror = tape.scalar(aux);
  }
  obj = tape.add(obj, tape.scale(entropy, cfg.entropy_coef));

  g.objective = obj;
  g.parts.surrogate = tape.scalar(surr);
  g.parts.entropy = tape.scalar(entropy);
  g.parts.total = tape.scalar(obj);
  return g;
}

int build_critic_loss(Tape& tape, const OptimizerConfig& cfg, const RewardCritic& critic,
                      NetGrads* critic_grads, const Mat& priv_obs, const Vec& target_values,
                      const Vec& returns) {
  const int xp = tape.constant(priv_obs);
  const int v = netgrad::forward_on_tape(tape, critic.value_net, critic_grads, xp);
  const int vt = tape.constant(target_values);
  const int rr = tape.constant(returns);
  const int e1 = tape.square(tape.sub(v, rr));
  // Clip bounds are the ratio bounds recentred at zero so a perfect fit has
  // zero loss.
  const int clipped = tape.clamp(tape.sub(vt, v), cfg.clip_c1 - 1.0, cfg.clip_c2 - 1.0);
  const int e2 = tape.square(tape.sub(tape.add(vt, clipped), rr));
  return tape.mean_all(tape.max_op(e1, e2));
}

LossBreakdown update_iteration(const UpdateBatch& batch, const OptimizerConfig& cfg,
                               const std::vector<ConstraintSpec>& specs, LagrangeState& lag,
                               ActorCritic& ac, Rng& rng) {
  cfg.validate(specs.size());
  const int B = batch.size();
  if (B == 0) throw std::invalid_argument("update_iteration: empty batch");
  if ((lag.lambda.array() < 0.0).any())
    throw std::logic_error("update_iteration: negative multiplier");

  // Per-batch advantage normalization. Cost terms keep their physical units.
  UpdateBatch work = batch;
  {
    const double mean = work.advantages.mean();
    const double sd = std::sqrt((work.advantages.array() - mean).square().sum() /
                                static_cast<double>(B));
    work.advantages = ((work.advantages.array() - mean) / (sd + 1e-8)).matrix();
  }

  const ObjectiveMode mode = decide_mode(cfg, specs, batch.jc_estimates, rng);

  const Vec target_values = ac.target_critic.forward_batch(batch.priv_obs).col(0);

  NetGrads mean_grads = NetGrads::zeros_like(ac.pi.mean_net);
  Mat log_std_grad = Mat::Zero(1, ac.pi.action_dim());
  NetGrads critic_grads = NetGrads::zeros_like(ac.critic.value_net);

  auto actor_params = netgrad::param_views(ac.pi.mean_net);
  actor_params.push_back({ac.pi.log_std.data(), ac.pi.log_std.size()});
  auto critic_params = netgrad::param_views(ac.critic.value_net);

  LossBreakdown acc;
  acc.penalties = Vec::Zero(static_cast<Eigen::Index>(specs.size()));
  int updates = 0;

  std::vector<int> order(static_cast<std::size_t>(B));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    for (int k = 0; k < cfg.minibatches; ++k) {
      const int lo = static_cast<int>(static_cast<long>(k) * B / cfg.minibatches);
      const int hi = static_cast<int>(static_cast<long>(k + 1) * B / cfg.minibatches);
      if (hi <= lo) continue;
      std::vector<int> rows(order.begin() + lo, order.begin() + hi);

      {
        Tape tape;
        mean_grads.set_zero();
        log_std_grad.setZero();
        ActorGraph g = build_actor_objective(tape, cfg, specs, lag.lambda, mode, work, rows,
                                             ac.pi, &mean_grads, &log_std_grad);
        if (!std::isfinite(g.parts.total))
          throw NumericalError("actor objective is not finite");
        tape.backward(tape.scale(g.objective, -1.0));  // ascend the objective
        auto actor_grads = netgrad::grad_views(mean_grads);
        actor_grads.push_back({log_std_grad.data(), log_std_grad.size()});
        ac.actor_opt.step(actor_params, actor_grads);

        acc.surrogate += g.parts.surrogate;
        acc.entropy += g.parts.entropy;
        acc.aux_mirror += g.parts.aux_mirror;
        acc.total += g.parts.total;
        acc.penalties += g.parts.penalties;
        acc.recovery_path = acc.recovery_path || g.parts.recovery_path;
        if (g.parts.selected_constraint >= 0)
          acc.selected_constraint = g.parts.selected_constraint;
      }

      {
        Tape tape;
        critic_grads.set_zero();
        const Mat mb_priv = gather_rows(batch.priv_obs, rows);
        const Vec mb_tv = gather(target_values, rows);
        const Vec mb_ret = gather(batch.value_targets, rows);
        const int loss = build_critic_loss(tape, cfg, ac.critic, &critic_grads, mb_priv,
                                           mb_tv, mb_ret);
        const double lv = tape.scalar(loss);
        if (!std::isfinite(lv)) throw NumericalError("critic loss is not finite");
        tape.backward(loss);
        ac.critic_opt.step(critic_params, netgrad::grad_views(critic_grads));
        acc.critic += lv;
      }
      ++updates;
    }
  }

  // Lagged target critic, refreshed once per iteration.
  const double d = cfg.target_critic_decay;
  for (int l = 0; l < ac.target_critic.num_layers(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    ac.target_critic.weights[li] =
        d * ac.target_critic.weights[li] + (1.0 - d) * ac.critic.value_net.weights[li];
    ac.target_critic.biases[li] =
        d * ac.target_critic.biases[li] + (1.0 - d) * ac.critic.value_net.biases[li];
  }

  if (cfg.algo == Algo::PPOLag && !cfg.freeze_multipliers)
    dual_update(lag, batch.jc_estimates, specs);

  if (updates > 0) {
    const double inv = 1.0 / static_cast<double>(updates);
    acc.surrogate *= inv;
    acc.entropy *= inv;
    acc.critic *= inv;
    acc.aux_mirror *= inv;
    acc.total *= inv;
    acc.penalties *= inv;
  }
  return acc;
}

}  // namespace ecrl::optimizers

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ecrl/optimizers.hpp"

using namespace ecrl;
using namespace ecrl::optimizers;
using cmdp::ConstraintKind;
using cmdp::ConstraintSpec;
using netgrad::Activation;
using netgrad::Mat;
using netgrad::NetGrads;
using netgrad::Tape;
using netgrad::Vec;
using policy::GaussianPolicy;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::vector<ConstraintSpec> biped_specs(double b1 = 25.0, double b2 = 0.05) {
  return {{0, ConstraintKind::DiscountedSum, 0.9, b1},
          {1, ConstraintKind::BatchAverage, 1.0, b2}};
}

// Small synthetic batch over a 3-dim obs / 2-dim action policy with a
// mirror structure (swap action dims; swap obs dims 1,2).
struct TestSetup {
  GaussianPolicy pi;
  UpdateBatch batch;
  std::vector<ConstraintSpec> specs;
  OptimizerConfig cfg;

  explicit TestSetup(std::uint64_t seed, int B = 6) : specs(biped_specs()) {
    Rng rng(seed);
    pi = GaussianPolicy::make(3, {4}, 2, Activation::Tanh, std::log(0.5), rng);
    batch.obs.resize(B, 3);
    batch.priv_obs.resize(B, 3);
    batch.actions.resize(B, 2);
    batch.old_log_prob.resize(B);
    batch.advantages.resize(B);
    batch.value_targets.resize(B);
    batch.cost_to_go.resize(B, 2);
    batch.inst_costs.resize(B, 2);
    for (int i = 0; i < B; ++i) {
      for (int j = 0; j < 3; ++j) batch.obs(i, j) = rng.uniform(-1, 1);
      batch.priv_obs.row(i) = batch.obs.row(i);
      for (int j = 0; j < 2; ++j) batch.actions(i, j) = rng.uniform(-1, 1);
      batch.advantages[i] = rng.uniform(-1, 1);
      batch.value_targets[i] = rng.uniform(-1, 1);
      batch.cost_to_go(i, 0) = rng.uniform(5, 30);
      batch.cost_to_go(i, 1) = 0.0;
      batch.inst_costs(i, 0) = rng.uniform(0.5, 3.0);
      batch.inst_costs(i, 1) = rng.uniform(0, 0.2);
      batch.old_log_prob[i] = pi.log_prob(batch.obs.row(i).transpose(),
                                          batch.actions.row(i).transpose());
    }
    policy::SignedPerm obs_m;
    obs_m.src = {0, 2, 1};
    obs_m.sign = Vec::Ones(3);
    batch.obs_mirrored = obs_m.apply_rows(batch.obs);
    batch.action_mirror.src = {1, 0};
    batch.action_mirror.sign = Vec::Ones(2);
    batch.jc_estimates = vec({20.0, 0.02});
    cfg.algo = Algo::PPOLag;
    cfg.entropy_coef = 1e-3;
  }

  ActorGraph build(Tape& tape, const Vec& lambda, const ObjectiveMode& mode,
                   NetGrads* grads = nullptr, Mat* ls_grad = nullptr) const {
    std::vector<int> rows;
    for (int i = 0; i < batch.size(); ++i) rows.push_back(i);
    return build_actor_objective(tape, cfg, specs, lambda, mode, batch, rows, pi, grads,
                                 ls_grad);
  }
};

}  // namespace

TEST_CASE("ppo_surrogate") {
  // All ratios at 1: no clipping, result is the advantage mean.
  const Vec ones = Vec::Ones(4);
  const Vec adv = vec({1.0, -2.0, 0.5, 0.25});
  CHECK(ppo_surrogate(ones, adv, 0.8, 1.2) == doctest::Approx(adv.mean()).epsilon(1e-15));

  CHECK(ppo_surrogate(vec({1.5}), vec({1.0}), 0.8, 1.2) == doctest::Approx(1.2));
  CHECK(ppo_surrogate(vec({0.5}), vec({-1.0}), 0.8, 1.2) == doctest::Approx(-0.8));

  CHECK_THROWS_AS(ppo_surrogate(Vec(), Vec(), 0.8, 1.2), std::invalid_argument);
}

TEST_CASE("critic_loss") {
  const Vec v = vec({1.0, 2.0});
  CHECK(critic_loss(v, v, v, -0.2, 0.2) == 0.0);

  // V = R but a lagging target keeps the loss positive through the max.
  const Vec vt = vec({3.0, 4.0});
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double e2 = vt[i] + std::clamp(vt[i] - v[i], -0.2, 0.2) - v[i];
    expect += std::max(0.0, e2 * e2);
  }
  expect /= 2.0;
  CHECK(critic_loss(v, vt, v, -0.2, 0.2) == doctest::Approx(expect));
  CHECK(critic_loss(v, vt, v, -0.2, 0.2) > 0.0);

  // Even in (V - R) when the target equals the value.
  const Vec r_hi = vec({1.5, 2.5});
  const Vec r_lo = vec({0.5, 1.5});
  CHECK(critic_loss(v, v, r_hi, -0.2, 0.2) ==
        doctest::Approx(critic_loss(v, v, r_lo, -0.2, 0.2)).epsilon(1e-14));
}

TEST_CASE("dual_update basics") {
  auto specs = biped_specs(10.0, 0.05);

  // Fresh state, j_c exactly at the threshold: zero gradient, no movement.
  LagrangeState lag = LagrangeState::make(2, 1e-2);
  dual_update(lag, vec({10.0, 0.05}), specs);
  CHECK(lag.lambda[0] == 0.0);
  CHECK(lag.lambda[1] == 0.0);

  // Slack keeps a zero multiplier at zero (projection).
  dual_update(lag, vec({5.0, 0.01}), specs);
  CHECK(lag.lambda[0] == 0.0);
  CHECK(lag.lambda[1] == 0.0);

  // Sustained violation: strictly increasing.
  LagrangeState lag2 = LagrangeState::make(2, 1e-2);
  double prev = 0.0;
  for (int k = 0; k < 50; ++k) {
    dual_update(lag2, vec({12.0, 0.2}), specs);
    CHECK(lag2.lambda[0] > prev);
    prev = lag2.lambda[0];
  }
  // Constant slack from a fresh dual state with lambda > 0: strictly
  // decreasing until the projection clamps at zero.
  LagrangeState lag_dn = LagrangeState::make(2, 1e-2);
  lag_dn.lambda[0] = 0.12;
  double prev_dn = lag_dn.lambda[0];
  int steps_dn = 0;
  while (lag_dn.lambda[0] > 0.0 && steps_dn < 500) {
    dual_update(lag_dn, vec({5.0, 0.0}), specs);
    CHECK(lag_dn.lambda[0] < prev_dn);
    prev_dn = lag_dn.lambda[0];
    ++steps_dn;
  }
  CHECK(lag_dn.lambda[0] == 0.0);

  // After momentum from a long violation phase, sustained slack still
  // drives the multiplier back to zero.
  for (int k = 0; k < 500 && lag2.lambda[0] > 0.0; ++k)
    dual_update(lag2, vec({5.0, 0.0}), specs);
  CHECK(lag2.lambda[0] == 0.0);

  // Nonnegativity under random inputs.
  Rng rng(44);
  LagrangeState lag3 = LagrangeState::make(2, 0.05);
  for (int k = 0; k < 300; ++k) {
    dual_update(lag3, vec({rng.uniform(0, 30), rng.uniform(0, 0.3)}), specs);
    CHECK(lag3.lambda[0] >= 0.0);
    CHECK(lag3.lambda[1] >= 0.0);
  }
}

TEST_CASE("crpo_select") {
  auto specs = biped_specs(10.0, 0.05);
  Rng rng(7);
  CHECK(crpo_select(vec({5.0, 0.01}), specs, rng) == -1);
  CHECK(crpo_select(vec({15.0, 0.01}), specs, rng) == 0);
  CHECK(crpo_select(vec({5.0, 0.2}), specs, rng) == 1);

  // Two violated constraints: uniform selection, 10k draws within 50% +- 2%
  // and a chi-squared test at p > 0.01 (critical value 6.635, df = 1).
  int count0 = 0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k)
    if (crpo_select(vec({15.0, 0.2}), specs, rng) == 0) ++count0;
  const double frac = static_cast<double>(count0) / draws;
  CHECK(frac > 0.48);
  CHECK(frac < 0.52);
  const double expected = draws / 2.0;
  const double chi2 = (count0 - expected) * (count0 - expected) / expected +
                      (draws - count0 - expected) * (draws - count0 - expected) / expected;
  CHECK(chi2 < 6.635);
}

TEST_CASE("ppo_penalty_reward") {
  const Vec r = vec({1.0, 2.0});
  const Vec c = vec({10.0, 0.0});
  CHECK((ppo_penalty_reward(r, c, 0.0) - r).norm() == 0.0);
  const Vec shifted = ppo_penalty_reward(r, c, -0.01);
  CHECK(shifted[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(shifted[1] == 2.0);
  CHECK_THROWS_AS(ppo_penalty_reward(r, c, 0.1), std::invalid_argument);
}

TEST_CASE("ppo_lag objective: hand expansion on a single sample") {
  TestSetup ts(100, 1);
  Tape tape;
  ObjectiveMode mode;
  const Vec lambda = vec({0.3, 2.0});
  const ActorGraph g = ts.build(tape, lambda, mode);

  // Hand recomputation: L = surr - r*(l1*c1hat + l2*c2) + coef*entropy.
  const Vec obs = ts.batch.obs.row(0).transpose();
  const Vec act = ts.batch.actions.row(0).transpose();
  const double lp = ts.pi.log_prob(obs, act);
  const double r = std::exp(lp - ts.batch.old_log_prob[0]);
  const double adv = ts.batch.advantages[0];
  const double surr = std::min(r * adv, std::clamp(r, 0.8, 1.2) * adv);
  const Vec mean = ts.pi.mean_action(obs);
  const Vec mean_m = ts.pi.mean_action(ts.batch.obs_mirrored.row(0).transpose());
  const Vec mirrored = ts.batch.action_mirror.apply(mean_m);
  const double c2 = (mean - mirrored).squaredNorm();
  const double ent = ts.pi.log_std.sum() + 0.5 * 2 * (1.0 + std::log(2.0 * M_PI));
  const double expected = surr - r * (lambda[0] * ts.batch.cost_to_go(0, 0) + lambda[1] * c2) +
                          ts.cfg.entropy_coef * ent;
  CHECK(g.parts.total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(g.parts.penalties[0] == doctest::Approx(r * lambda[0] * ts.batch.cost_to_go(0, 0)));
  CHECK(g.parts.penalties[1] == doctest::Approx(r * lambda[1] * c2));
}

TEST_CASE("lambda = 0 reduces ppo_lag gradients to ppo exactly") {
  TestSetup ts(101);

  NetGrads g_lag = NetGrads::zeros_like(ts.pi.mean_net);
  Mat ls_lag = Mat::Zero(1, 2);
  {
    Tape tape;
    ObjectiveMode mode;
    const ActorGraph g = ts.build(tape, Vec::Zero(2), mode, &g_lag, &ls_lag);
    tape.backward(tape.scale(g.objective, -1.0));
  }

  TestSetup ts2(101);
  ts2.cfg.algo = Algo::PPO;
  NetGrads g_ppo = NetGrads::zeros_like(ts2.pi.mean_net);
  Mat ls_ppo = Mat::Zero(1, 2);
  {
    Tape tape;
    ObjectiveMode mode;
    const ActorGraph g = ts2.build(tape, Vec::Zero(2), mode, &g_ppo, &ls_ppo);
    tape.backward(tape.scale(g.objective, -1.0));
  }

  for (std::size_t l = 0; l < g_lag.weights.size(); ++l) {
    CHECK((g_lag.weights[l].array() == g_ppo.weights[l].array()).all());
    CHECK((g_lag.biases[l].array() == g_ppo.biases[l].array()).all());
  }
  CHECK((ls_lag.array() == ls_ppo.array()).all());
}

TEST_CASE("p3o with inactive clamps matches ppo gradients") {
  TestSetup ts(102);
  ts.cfg.algo = Algo::P3O;
  ts.cfg.kappa_p3o = {1.0, 1.0};

  // Deep feasibility: epsilon very negative, every clamp rests at zero.
  ObjectiveMode mode;
  mode.epsilon = vec({-1e6, -1e6});

  NetGrads g_p3o = NetGrads::zeros_like(ts.pi.mean_net);
  Mat ls_p3o = Mat::Zero(1, 2);
  {
    Tape tape;
    const ActorGraph g = ts.build(tape, Vec::Zero(2), mode, &g_p3o, &ls_p3o);
    tape.backward(tape.scale(g.objective, -1.0));
    CHECK(g.parts.penalties[0] == 0.0);
    CHECK(g.parts.penalties[1] == 0.0);
  }

  TestSetup ts2(102);
  ts2.cfg.algo = Algo::PPO;
  NetGrads g_ppo = NetGrads::zeros_like(ts2.pi.mean_net);
  Mat ls_ppo = Mat::Zero(1, 2);
  {
    Tape tape;
    ObjectiveMode none;
    const ActorGraph g = ts2.build(tape, Vec::Zero(2), none, &g_ppo, &ls_ppo);
    tape.backward(tape.scale(g.objective, -1.0));
  }
  for (std::size_t l = 0; l < g_p3o.weights.size(); ++l) {
    CHECK((g_p3o.weights[l] - g_ppo.weights[l]).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((g_p3o.biases[l] - g_ppo.biases[l]).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK((ls_p3o - ls_ppo).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("p3o penalty value and continuity at the clamp boundary") {
  TestSetup ts(103, 1);
  ts.cfg.algo = Algo::P3O;
  ts.cfg.kappa_p3o = {1.0, 0.0 + 1.0};

  // Zero the constraint influence except a controlled channel-0 term.
  auto penalty_at = [&](double eps0) {
    Tape tape;
    ObjectiveMode mode;
    mode.epsilon = vec({eps0, -1e9});
    const ActorGraph g = ts.build(tape, Vec::Zero(2), mode);
    return g.parts.penalties[0];
  };
  const Vec obs = ts.batch.obs.row(0).transpose();
  const double r = std::exp(ts.pi.log_prob(obs, ts.batch.actions.row(0).transpose()) -
                            ts.batch.old_log_prob[0]);
  const double jc = r * ts.batch.cost_to_go(0, 0);

  // Linear region: J + eps = 2 gives penalty 2 (kappa = 1).
  CHECK(penalty_at(2.0 - jc) == doctest::Approx(2.0).epsilon(1e-9));
  // Continuity at the boundary.
  const double left = penalty_at(-jc - 1e-9);
  const double right = penalty_at(-jc + 1e-9);
  CHECK(left == 0.0);
  CHECK(right == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(std::abs(right - left) < 1e-8);
}

TEST_CASE("ipo barrier value, monotonicity and recovery") {
  TestSetup ts(104);
  ts.cfg.algo = Algo::IPO;
  ts.cfg.kappa_ipo = {1.0, 1.0};

  // Force the differentiable term to a fixed value c by setting all
  // cost-to-go entries equal and ratios to ~1 (actions at the recorded ones
  // keep new == old log-probs so r = 1 exactly).
  for (int i = 0; i < ts.batch.size(); ++i) {
    ts.batch.old_log_prob[i] = ts.pi.log_prob(ts.batch.obs.row(i).transpose(),
                                              ts.batch.actions.row(i).transpose());
    ts.batch.cost_to_go(i, 1) = 0.0;
  }

  auto barrier_penalty = [&](double c) {
    for (int i = 0; i < ts.batch.size(); ++i) ts.batch.cost_to_go(i, 0) = c;
    Tape tape;
    ObjectiveMode mode;
    const ActorGraph g = ts.build(tape, Vec::Zero(2), mode);
    return g.parts;  // penalties[0] = -kappa*log(b - J)
  };

  // Unit slack: log(1) = 0. Thresholds: b1 = 25.
  const auto at_unit = barrier_penalty(24.0);
  CHECK(at_unit.penalties[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK_FALSE(at_unit.recovery_path);

  // Objective decreases monotonically as the slack shrinks toward zero.
  double prev_total = barrier_penalty(1.0).total;  // slack 24
  for (double slack : {10.0, 1.0, 1e-2, 1e-4, 1e-6}) {
    const auto parts = barrier_penalty(25.0 - slack);
    CHECK(parts.total < prev_total);
    prev_total = parts.total;
  }

  // Infeasible term flips to the recovery path with the flag set.
  const auto infeasible = barrier_penalty(26.0);
  CHECK(infeasible.recovery_path);
  CHECK(infeasible.selected_constraint == 0);
  CHECK(infeasible.surrogate == 0.0);
}

TEST_CASE("crpo mode selection and update_iteration smoke") {
  TestSetup ts(105);
  ts.cfg.algo = Algo::CRPO;
  Rng rng(1);

  // No violations: feasible reward objective.
  ObjectiveMode mode = decide_mode(ts.cfg, ts.specs, vec({10.0, 0.01}), rng);
  CHECK_FALSE(mode.recovery);
  // One violation: always selected.
  mode = decide_mode(ts.cfg, ts.specs, vec({30.0, 0.01}), rng);
  CHECK(mode.recovery);
  CHECK(mode.selected == 0);
}

TEST_CASE("update_iteration with zero learning rates changes nothing") {
  TestSetup ts(106);
  ts.cfg.actor_lr = 0.0;
  ts.cfg.critic_lr = 0.0;
  ts.cfg.lambda_lr = 0.0;

  Rng rng(9);
  auto critic = policy::RewardCritic::make(3, {4}, Activation::Tanh, rng);
  ActorCritic ac = ActorCritic::make(ts.pi, critic, ts.cfg.actor_lr, ts.cfg.critic_lr);
  LagrangeState lag = LagrangeState::make(2, ts.cfg.lambda_lr);
  lag.lambda = vec({0.2, 0.1});
  const Vec lambda_before = lag.lambda;

  const auto w0 = ac.pi.mean_net.weights;
  const auto ls0 = ac.pi.log_std;
  const auto cw0 = ac.critic.value_net.weights;

  Rng update_rng(5);
  // Force a violated batch so even the dual path is exercised.
  ts.batch.jc_estimates = vec({30.0, 0.2});
  update_iteration(ts.batch, ts.cfg, ts.specs, lag, ac, update_rng);

  for (std::size_t l = 0; l < w0.size(); ++l)
    CHECK((ac.pi.mean_net.weights[l].array() == w0[l].array()).all());
  CHECK((ac.pi.log_std.array() == ls0.array()).all());
  for (std::size_t l = 0; l < cw0.size(); ++l)
    CHECK((ac.critic.value_net.weights[l].array() == cw0[l].array()).all());
  CHECK((lag.lambda.array() == lambda_before.array()).all());
}

TEST_CASE("raising lambda_1 strictly lowers the ppo_lag objective") {
  TestSetup ts(107);
  // Mean ratio-weighted energy term is positive by construction (costs > 0).
  Tape t1, t2;
  ObjectiveMode mode;
  const double low = ts.build(t1, vec({0.1, 0.0}), mode).parts.total;
  const double high = ts.build(t2, vec({0.6, 0.0}), mode).parts.total;
  CHECK(high < low);
}

TEST_CASE("update_iteration is deterministic for a fixed batch and seed") {
  auto run_once = [] {
    TestSetup ts(108);
    Rng rng(9);
    auto critic = policy::RewardCritic::make(3, {4}, Activation::Tanh, rng);
    ActorCritic ac = ActorCritic::make(ts.pi, critic, 1e-3, 1e-3);
    LagrangeState lag = LagrangeState::make(2, 1e-3);
    Rng update_rng(55);
    for (int k = 0; k < 3; ++k)
      update_iteration(ts.batch, ts.cfg, ts.specs, lag, ac, update_rng);
    return ac.pi.mean_net.weights[0](0, 0);
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("update_iteration rejects negative multipliers") {
  TestSetup ts(109);
  Rng rng(9);
  auto critic = policy::RewardCritic::make(3, {4}, Activation::Tanh, rng);
  ActorCritic ac = ActorCritic::make(ts.pi, critic, 1e-3, 1e-3);
  LagrangeState lag = LagrangeState::make(2, 1e-3);
  lag.lambda[0] = -0.5;
  Rng update_rng(55);
  CHECK_THROWS_AS(update_iteration(ts.batch, ts.cfg, ts.specs, lag, ac, update_rng),
                  std::logic_error);
}

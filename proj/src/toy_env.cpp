#include "ecrl/toy_env.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace ecrl::env {

void ToyConfig::validate() const {
  if (!(dt > 0) || horizon <= 0) throw std::invalid_argument("toy: bad time grid");
  if (!(u_max > 0)) throw std::invalid_argument("toy: u_max must be positive");
  if (!(band > 0)) throw std::invalid_argument("toy: band must be positive");
  if (obs_frames <= 0) throw std::invalid_argument("toy: bad frame stack");
}

ToyEnv::ToyEnv(ToyConfig config, std::uint64_t seed) : config_(config), rng_(seed) {
  config_.validate();
  // No left/right structure: mirroring is the identity, so the mirror cost
  // channel is identically zero and the batch layout matches the biped.
  obs_mirror_ = SignedPerm::identity(obs_frame_dim());
  action_mirror_ = SignedPerm::identity(action_dim());
  reset();
}

void ToyEnv::reset() {
  v_ = config_.v_cmd;
  if (config_.v0_noise > 0.0) v_ += rng_.uniform(-config_.v0_noise, config_.v0_noise);
  last_u_ = 0.0;
  step_count_ = 0;
}

StepOutput ToyEnv::step(const Vec& action) {
  if (action.size() != 1) throw std::invalid_argument("toy step: action size mismatch");
  const double u = std::clamp(action[0], -config_.u_max, config_.u_max);
  const double power = std::abs(u * v_);
  v_ = config_.step_v(v_, u);
  last_u_ = u;
  ++step_count_;

  StepOutput out;
  const double err = v_ - config_.v_cmd;
  out.reward = std::exp(-config_.tracking_width * err * err);
  out.cost_channels = Vec::Zero(2);
  out.cost_channels[0] = power;
  out.done = step_count_ >= config_.horizon;
  out.truncated = out.done;
  return out;
}

Vec ToyEnv::obs_frame() const {
  Vec f(2);
  f[0] = config_.v_cmd;
  f[1] = v_;
  return f;
}

Vec ToyEnv::priv_frame() const { return obs_frame(); }

std::vector<std::pair<std::string, double>> ToyEnv::telemetry() const {
  return {{"v", v_}, {"u", last_u_}};
}

double toy_min_feasible_cost(const ToyConfig& config, double gamma_c, int v_grid, int u_grid) {
  config.validate();
  if (v_grid < 2 || u_grid < 2) throw std::invalid_argument("toy dp: grid too small");
  const double lo = config.v_cmd - config.band;
  const double hi = config.v_cmd + config.band;
  const double dv = (hi - lo) / (v_grid - 1);
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> J(static_cast<std::size_t>(v_grid), 0.0);  // J(v, T) = 0
  std::vector<double> Jn(static_cast<std::size_t>(v_grid), 0.0);

  for (int t = config.horizon - 1; t >= 0; --t) {
    for (int i = 0; i < v_grid; ++i) {
      const double v = lo + i * dv;
      double best = kInf;
      for (int k = 0; k < u_grid; ++k) {
        const double u = -config.u_max + 2.0 * config.u_max * k / (u_grid - 1);
        const double vn = config.step_v(v, u);
        if (vn < lo || vn > hi) continue;  // feasible set: stay inside the band
        const double frac = (vn - lo) / dv;
        const int i0 = std::min(v_grid - 2, static_cast<int>(frac));
        const double w = frac - i0;
        const double cont = (1.0 - w) * J[static_cast<std::size_t>(i0)] +
                            w * J[static_cast<std::size_t>(i0 + 1)];
        const double cost = std::abs(u * v) + gamma_c * cont;
        if (cost < best) best = cost;
      }
      Jn[static_cast<std::size_t>(i)] = best;
    }
    J.swap(Jn);
  }

  const double frac = (config.v_cmd - lo) / dv;
  const int i0 = std::min(v_grid - 2, static_cast<int>(frac));
  const double w = frac - i0;
  return (1.0 - w) * J[static_cast<std::size_t>(i0)] + w * J[static_cast<std::size_t>(i0 + 1)];
}

}  // namespace ecrl::env

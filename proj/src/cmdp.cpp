#include "ecrl/cmdp.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace ecrl::cmdp {

void Trajectory::validate(int horizon) const {
  if (length() > horizon) throw std::invalid_argument("trajectory exceeds horizon");
  for (int t = 0; t < length(); ++t) {
    const Transition& tr = transitions[static_cast<std::size_t>(t)];
    if (tr.done && t + 1 != length())
      throw std::invalid_argument("done before final transition");
    if (!std::isfinite(tr.log_prob))
      throw std::invalid_argument("non-finite log_prob");
    if ((tr.cost_channels.array() < 0.0).any())
      throw std::invalid_argument("negative cost channel");
  }
  if (length() > 0 && transitions.back().done && bootstrap_value != 0.0)
    throw std::invalid_argument("terminal trajectory must have zero bootstrap");
}

void ConstraintSpec::validate() const {
  if (!(gamma_c > 0.0 && gamma_c <= 1.0))
    throw std::invalid_argument("gamma_c must lie in (0, 1]");
  if (channel == 0 && !(threshold_b > 0.0))
    throw std::invalid_argument("energy threshold must be positive");
}

double discounted_return(const VectorXd& values, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0))
    throw std::invalid_argument("gamma must lie in [0, 1]");
  double acc = 0.0;
  for (Eigen::Index t = values.size() - 1; t >= 0; --t) acc = values[t] + gamma * acc;
  return acc;
}

VectorXd gae_advantages(const VectorXd& rewards, const VectorXd& values,
                        double bootstrap, double gamma, double lambda_gae) {
  if (rewards.size() != values.size())
    throw std::invalid_argument("rewards/values length mismatch");
  if (!(gamma >= 0.0 && gamma <= 1.0) || !(lambda_gae >= 0.0 && lambda_gae <= 1.0))
    throw std::invalid_argument("gamma and lambda must lie in [0, 1]");
  const Eigen::Index n = rewards.size();
  VectorXd adv(n);
  double acc = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double v_next = (t + 1 < n) ? values[t + 1] : bootstrap;
    const double delta = rewards[t] + gamma * v_next - values[t];
    acc = delta + gamma * lambda_gae * acc;
    adv[t] = acc;
  }
  return adv;
}

double constraint_return(const Trajectory& traj, const ConstraintSpec& spec) {
  const int n = traj.length();
  VectorXd channel(n);
  for (int t = 0; t < n; ++t) {
    const VectorXd& c = traj.transitions[static_cast<std::size_t>(t)].cost_channels;
    if (spec.channel < 0 || spec.channel >= c.size())
      throw std::out_of_range("cost channel index out of range");
    channel[t] = c[spec.channel];
  }
  if (spec.kind == ConstraintKind::DiscountedSum)
    return discounted_return(channel, spec.gamma_c);
  return n > 0 ? channel.mean() : 0.0;
}

VectorXd cost_to_go(const VectorXd& costs, double gamma_c) {
  if (!(gamma_c >= 0.0 && gamma_c <= 1.0))
    throw std::invalid_argument("gamma_c must lie in [0, 1]");
  VectorXd out(costs.size());
  double acc = 0.0;
  for (Eigen::Index t = costs.size() - 1; t >= 0; --t) {
    acc = costs[t] + gamma_c * acc;
    out[t] = acc;
  }
  return out;
}

double violation(const ConstraintSpec& spec, double j_c) {
  return j_c - spec.threshold_b;
}

namespace {
void print_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}
}  // namespace

void dump_csv(std::ostream& os, const std::vector<Trajectory>& trajectories) {
  int m = 0;
  for (const auto& tr : trajectories)
    if (!tr.transitions.empty()) {
      m = static_cast<int>(tr.transitions.front().cost_channels.size());
      break;
    }
  os << "t,reward";
  for (int i = 1; i <= m; ++i) os << ",cost_" << i;
  os << ",value,log_prob,done\n";
  for (const auto& tr : trajectories) {
    for (const auto& s : tr.transitions) {
      os << s.timestep << ',';
      print_double(os, s.reward);
      for (int i = 0; i < m; ++i) {
        os << ',';
        print_double(os, s.cost_channels[i]);
      }
      os << ',';
      print_double(os, s.value_estimate);
      os << ',';
      print_double(os, s.log_prob);
      os << ',' << (s.done ? 1 : 0) << '\n';
    }
  }
}

}  // namespace ecrl::cmdp

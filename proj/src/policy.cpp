#include "ecrl/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace ecrl::policy {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)
}

GaussianPolicy GaussianPolicy::make(int obs_dim, const std::vector<int>& hidden, int action_dim,
                                    Activation act, double init_log_std, Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim);
  GaussianPolicy pi;
  pi.mean_net = DenseNet::make(sizes, act, rng);
  // Small output layer keeps initial actions near the nominal pose.
  pi.mean_net.weights.back() *= 0.01;
  pi.log_std = Vec::Constant(action_dim, init_log_std);
  return pi;
}

ActionSample GaussianPolicy::act(const Vec& obs_history, Rng& rng) const {
  const Vec mean = mean_net.forward(obs_history);
  const int n = action_dim();
  Vec action(n);
  for (int i = 0; i < n; ++i) action[i] = mean[i] + std::exp(log_std[i]) * rng.normal();
  return {action, log_prob_given_mean(mean, action)};
}

double GaussianPolicy::log_prob(const Vec& obs_history, const Vec& action) const {
  return log_prob_given_mean(mean_net.forward(obs_history), action);
}

double GaussianPolicy::log_prob_given_mean(const Vec& mean, const Vec& action) const {
  if (mean.size() != action.size() || mean.size() != log_std.size())
    throw std::invalid_argument("log_prob: dimension mismatch");
  double q = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    q += z * z;
  }
  return -0.5 * q - log_std.sum() - 0.5 * static_cast<double>(mean.size()) * kLog2Pi;
}

double ratio(double new_log_prob, double old_log_prob, double exp_bound) {
  if (!std::isfinite(new_log_prob) || !std::isfinite(old_log_prob))
    throw std::invalid_argument("ratio: non-finite log-prob");
  double d = new_log_prob - old_log_prob;
  if (d > exp_bound) d = exp_bound;
  if (d < -exp_bound) d = -exp_bound;
  return std::exp(d);
}

RewardCritic RewardCritic::make(int obs_dim, const std::vector<int>& hidden, Activation act,
                                Rng& rng) {
  std::vector<int> sizes;
  sizes.push_back(obs_dim);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  RewardCritic c;
  c.value_net = DenseNet::make(sizes, act, rng);
  return c;
}

double RewardCritic::value(const Vec& privileged_obs) const {
  return value_net.forward(privileged_obs)[0];
}

Vec RewardCritic::value_batch(const Mat& obs) const {
  return value_net.forward_batch(obs).col(0);
}

SignedPerm SignedPerm::identity(int n) {
  SignedPerm p;
  p.src.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p.src[static_cast<std::size_t>(i)] = i;
  p.sign = Vec::Ones(n);
  return p;
}

Vec SignedPerm::apply(const Vec& x) const {
  if (x.size() != dim()) throw std::invalid_argument("SignedPerm: dimension mismatch");
  Vec y(dim());
  for (int i = 0; i < dim(); ++i)
    y[i] = sign[i] * x[src[static_cast<std::size_t>(i)]];
  return y;
}

Mat SignedPerm::apply_rows(const Mat& X) const {
  if (X.cols() != dim()) throw std::invalid_argument("SignedPerm: dimension mismatch");
  Mat Y(X.rows(), X.cols());
  for (int i = 0; i < dim(); ++i)
    Y.col(i) = sign[i] * X.col(src[static_cast<std::size_t>(i)]);
  return Y;
}

SignedPerm SignedPerm::tiled(int copies) const {
  SignedPerm p;
  const int n = dim();
  p.src.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(copies));
  p.sign = Vec(static_cast<Eigen::Index>(n) * copies);
  for (int c = 0; c < copies; ++c)
    for (int i = 0; i < n; ++i) {
      p.src[static_cast<std::size_t>(c * n + i)] = c * n + src[static_cast<std::size_t>(i)];
      p.sign[c * n + i] = sign[i];
    }
  return p;
}

bool SignedPerm::is_involution() const {
  for (int i = 0; i < dim(); ++i) {
    const int j = src[static_cast<std::size_t>(i)];
    if (src[static_cast<std::size_t>(j)] != i) return false;
    if (sign[i] * sign[j] != 1.0) return false;
  }
  return true;
}

double mirror_cost(const MeanFn& mean_fn, const Vec& obs, const SignedPerm& obs_mirror,
                   const SignedPerm& action_mirror) {
  const Vec a = mean_fn(obs);
  const Vec am = action_mirror.apply(mean_fn(obs_mirror.apply(obs)));
  return (a - am).squaredNorm();
}

double mirror_cost(const GaussianPolicy& pi, const Vec& obs, const SignedPerm& obs_mirror,
                   const SignedPerm& action_mirror) {
  return mirror_cost([&pi](const Vec& s) { return pi.mean_action(s); }, obs, obs_mirror,
                     action_mirror);
}

Vec mirror_cost_batch(const GaussianPolicy& pi, const Mat& obs, const Mat& obs_mirrored,
                      const SignedPerm& action_mirror) {
  const Mat M = pi.mean_batch(obs);
  const Mat Mm = action_mirror.apply_rows(pi.mean_batch(obs_mirrored));
  return (M - Mm).rowwise().squaredNorm();
}

MeanFn symmetrized_mean(const GaussianPolicy& pi, const SignedPerm& obs_mirror,
                        const SignedPerm& action_mirror) {
  return [&pi, obs_mirror, action_mirror](const Vec& s) {
    const Vec a = pi.mean_action(s);
    const Vec am = action_mirror.apply(pi.mean_action(obs_mirror.apply(s)));
    return Vec(0.5 * (a + am));
  };
}

}  // namespace ecrl::policy

#include "ecrl/net.hpp"

#include <cmath>
#include <stdexcept>

namespace ecrl::netgrad {

std::string activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "elu";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "elu") return Activation::Elu;
  throw std::invalid_argument("unknown activation: " + name);
}

DenseNet DenseNet::make(std::vector<int> sizes, Activation act, Rng& rng) {
  if (sizes.size() < 2) throw std::invalid_argument("need at least input and output layer");
  DenseNet net;
  net.layer_sizes = std::move(sizes);
  net.activation = act;
  for (std::size_t l = 0; l + 1 < net.layer_sizes.size(); ++l) {
    const int in = net.layer_sizes[l];
    const int out = net.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    Mat W(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) W(i, j) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(W));
    net.biases.push_back(Vec::Zero(out));
  }
  return net;
}

std::size_t DenseNet::num_params() const {
  std::size_t n = 0;
  for (const auto& W : weights) n += static_cast<std::size_t>(W.size());
  for (const auto& b : biases) n += static_cast<std::size_t>(b.size());
  return n;
}

bool DenseNet::all_finite() const {
  for (const auto& W : weights)
    if (!W.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

namespace {
inline double elu(double v) { return v > 0.0 ? v : std::expm1(v); }
}  // namespace

Vec DenseNet::forward(const Vec& x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("forward: input size mismatch");
  Vec h = x;
  for (int l = 0; l < num_layers(); ++l) {
    Vec z = weights[static_cast<std::size_t>(l)] * h + biases[static_cast<std::size_t>(l)];
    if (l + 1 < num_layers()) {
      if (activation == Activation::Tanh)
        z = z.array().tanh().matrix();
      else
        z = z.unaryExpr([](double v) { return elu(v); });
    }
    h = std::move(z);
  }
  return h;
}

Mat DenseNet::forward_batch(const Mat& X) const {
  if (X.cols() != input_dim()) throw std::invalid_argument("forward_batch: input size mismatch");
  Mat H = X;
  for (int l = 0; l < num_layers(); ++l) {
    Mat Z = H * weights[static_cast<std::size_t>(l)].transpose();
    Z.rowwise() += biases[static_cast<std::size_t>(l)].transpose();
    if (l + 1 < num_layers()) {
      if (activation == Activation::Tanh)
        Z = Z.array().tanh().matrix();
      else
        Z = Z.unaryExpr([](double v) { return elu(v); });
    }
    H = std::move(Z);
  }
  return H;
}

NetGrads NetGrads::zeros_like(const DenseNet& net) {
  NetGrads g;
  for (const auto& W : net.weights) g.weights.push_back(Mat::Zero(W.rows(), W.cols()));
  for (const auto& b : net.biases) g.biases.push_back(Vec::Zero(b.size()));
  return g;
}

void NetGrads::set_zero() {
  for (auto& W : weights) W.setZero();
  for (auto& b : biases) b.setZero();
}

bool NetGrads::all_finite() const {
  for (const auto& W : weights)
    if (!W.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

int forward_on_tape(Tape& tape, const DenseNet& net, NetGrads* grads, int input_node) {
  int h = input_node;
  for (int l = 0; l < net.num_layers(); ++l) {
    const auto li = static_cast<std::size_t>(l);
    Mat* dW = grads ? &grads->weights[li] : nullptr;
    Vec* db = grads ? &grads->biases[li] : nullptr;
    h = tape.affine(h, net.weights[li], dW, net.biases[li], db);
    if (l + 1 < net.num_layers())
      h = net.activation == Activation::Tanh ? tape.tanh_act(h) : tape.elu_act(h);
  }
  return h;
}

std::vector<ParamView> param_views(DenseNet& net) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    views.push_back({net.weights[l].data(), net.weights[l].size()});
    views.push_back({net.biases[l].data(), net.biases[l].size()});
  }
  return views;
}

std::vector<ParamView> grad_views(NetGrads& grads) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < grads.weights.size(); ++l) {
    views.push_back({grads.weights[l].data(), grads.weights[l].size()});
    views.push_back({grads.biases[l].data(), grads.biases[l].size()});
  }
  return views;
}

std::size_t total_size(const std::vector<ParamView>& views) {
  std::size_t n = 0;
  for (const auto& v : views) n += static_cast<std::size_t>(v.size);
  return n;
}

void Adam::step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: view count mismatch");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size) throw std::invalid_argument("adam: view size mismatch");
    for (std::ptrdiff_t j = 0; j < params[i].size; ++j, ++k) {
      const double g = grads[i].data[j];
      if (!std::isfinite(g)) throw std::runtime_error("adam: non-finite gradient");
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[k] / bc1;
      const double vhat = v_[k] / bc2;
      params[i].data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  if (k != m_.size()) throw std::invalid_argument("adam: parameter count mismatch");
}

void Adam::step_scalar(double& param, double grad) {
  ParamView p{&param, 1};
  ParamView g{&grad, 1};
  step({p}, {g});
}

}  // namespace ecrl::netgrad

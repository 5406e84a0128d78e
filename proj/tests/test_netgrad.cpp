#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ecrl/checkpoint.hpp"
#include "ecrl/net.hpp"
#include "ecrl/rng.hpp"
#include "ecrl/tape.hpp"

using namespace ecrl;
using namespace ecrl::netgrad;

namespace {

// Scalar loss of a tiny net used for the finite-difference check:
// mean over batch of (sum(tanh_net(x)) - y)^2 plus an exp/log/clip tangle so
// every tape op sees gradient flow.
double fancy_loss_value(const DenseNet& net, const Mat& X, const Vec& y) {
  const Mat out = net.forward_batch(X);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double s = out.row(i).sum();
    const double e = s - y[i];
    const double warped = std::exp(std::clamp(0.3 * e, -2.0, 2.0));
    acc += e * e + std::log(1.0 + warped) + std::max(0.0, e);
  }
  return acc / static_cast<double>(X.rows());
}

int fancy_loss_graph(Tape& tape, const DenseNet& net, NetGrads* grads, const Mat& X,
                     const Vec& y) {
  const int x = tape.constant(X);
  const int out = forward_on_tape(tape, net, grads, x);
  const int s = tape.row_sum(out);
  const int e = tape.sub(s, tape.constant(y));
  const int warped = tape.exp_op(tape.clamp(tape.scale(e, 0.3), -2.0, 2.0));
  const int log_term = tape.log_op(tape.add_const(warped, 1.0));
  const int relu_term = tape.relu(e);
  const int total = tape.add(tape.add(tape.square(e), log_term), relu_term);
  return tape.mean_all(total);
}

}  // namespace

TEST_CASE("forward zero net and identity layer") {
  Rng rng(1);
  DenseNet net = DenseNet::make({3, 4, 2}, Activation::Tanh, rng);
  for (auto& W : net.weights) W.setZero();
  for (auto& b : net.biases) b.setZero();
  Vec x(3);
  x << 1.0, -2.0, 3.0;
  CHECK(net.forward(x).isZero(0.0));

  DenseNet id;
  id.layer_sizes = {3, 3};
  id.activation = Activation::Tanh;
  id.weights.push_back(Mat::Identity(3, 3));
  id.biases.push_back(Vec::Zero(3));
  CHECK((id.forward(x) - x).norm() == 0.0);

  CHECK_THROWS_AS(net.forward(Vec::Zero(5)), std::invalid_argument);
}

TEST_CASE("forward matches a hand-rolled evaluation") {
  Rng rng(42);
  DenseNet net = DenseNet::make({2, 3, 1}, Activation::Tanh, rng);
  Vec x(2);
  x << 0.37, -1.2;
  // Independent evaluation with explicit loops.
  Vec h(3);
  for (int i = 0; i < 3; ++i) {
    double z = net.biases[0][i];
    for (int j = 0; j < 2; ++j) z += net.weights[0](i, j) * x[j];
    h[i] = std::tanh(z);
  }
  double out = net.biases[1][0];
  for (int i = 0; i < 3; ++i) out += net.weights[1](0, i) * h[i];
  CHECK(net.forward(x)[0] == doctest::Approx(out).epsilon(1e-14));

  // Batched forward agrees with the single-sample path bit-for-bit is not
  // required, but values must match tightly.
  Mat X(2, 2);
  X.row(0) = x.transpose();
  X.row(1) = (-x).transpose();
  Mat B = net.forward_batch(X);
  CHECK(B(0, 0) == doctest::Approx(net.forward(x)[0]).epsilon(1e-14));
}

TEST_CASE("forward is deterministic") {
  Rng rng(3);
  DenseNet net = DenseNet::make({4, 8, 2}, Activation::Elu, rng);
  Vec x(4);
  x << 0.1, 0.2, -0.3, 0.9;
  const Vec a = net.forward(x);
  const Vec b = net.forward(x);
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);
}

TEST_CASE("backward trivial cases") {
  // Loss identically zero: scale the output by 0.
  Rng rng(7);
  DenseNet net = DenseNet::make({2, 3, 1}, Activation::Tanh, rng);
  NetGrads grads = NetGrads::zeros_like(net);
  Tape tape;
  Mat X(1, 2);
  X << 0.5, -0.25;
  const int out = forward_on_tape(tape, net, &grads, tape.constant(X));
  const int loss = tape.mean_all(tape.scale(out, 0.0));
  tape.backward(loss);
  for (const auto& W : grads.weights) CHECK(W.isZero(0.0));
  for (const auto& b : grads.biases) CHECK(b.isZero(0.0));

  // Pass-through of a single weight: loss = w * 1.
  DenseNet tiny;
  tiny.layer_sizes = {1, 1};
  tiny.activation = Activation::Tanh;
  tiny.weights.push_back(Mat::Constant(1, 1, 0.77));
  tiny.biases.push_back(Vec::Zero(1));
  NetGrads tg = NetGrads::zeros_like(tiny);
  Tape t2;
  const int one = t2.constant(Mat::Ones(1, 1));
  const int y = forward_on_tape(t2, tiny, &tg, one);
  t2.backward(t2.mean_all(y));
  CHECK(tg.weights[0](0, 0) == 1.0);
  CHECK(tg.biases[0][0] == 1.0);

  // Non-scalar losses are a contract error.
  Tape t3;
  const int wide = t3.constant(Mat::Ones(2, 3));
  CHECK_THROWS_AS(t3.backward(wide), std::invalid_argument);
}

TEST_CASE("backward matches central finite differences") {
  for (Activation act : {Activation::Tanh, Activation::Elu}) {
    Rng rng(101);
    DenseNet net = DenseNet::make({3, 4, 2}, act, rng);  // 3*4+4 + 4*2+2 = 26 params
    Mat X(5, 3);
    Vec y(5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform(-1, 1);
      y[i] = rng.uniform(-1, 1);
    }

    NetGrads grads = NetGrads::zeros_like(net);
    Tape tape;
    const int loss = fancy_loss_graph(tape, net, &grads, X, y);
    CHECK(tape.scalar(loss) == doctest::Approx(fancy_loss_value(net, X, y)).epsilon(1e-12));
    tape.backward(loss);

    const double h = 1e-5;
    double max_rel = 0.0;
    auto check_param = [&](double& p, double analytic) {
      const double saved = p;
      p = saved + h;
      const double up = fancy_loss_value(net, X, y);
      p = saved - h;
      const double dn = fancy_loss_value(net, X, y);
      p = saved;
      const double fd = (up - dn) / (2.0 * h);
      const double rel = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8});
      max_rel = std::max(max_rel, rel);
    };
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      for (Eigen::Index i = 0; i < net.weights[l].size(); ++i)
        check_param(net.weights[l].data()[i], grads.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
        check_param(net.biases[l].data()[i], grads.biases[l].data()[i]);
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("tape op edge rules") {
  Tape tape;
  Mat v(1, 3);
  v << -1.0, 0.0, 2.0;
  const int a = tape.param(v, nullptr);
  const int r = tape.relu(a);
  CHECK(tape.value(r)(0, 0) == 0.0);
  CHECK(tape.value(r)(0, 2) == 2.0);

  const int c = tape.clamp(a, -0.5, 1.5);
  CHECK(tape.value(c)(0, 0) == -0.5);
  CHECK(tape.value(c)(0, 2) == 1.5);

  Mat sg = Mat::Zero(1, 3);
  Tape t2;
  const int p = t2.param(v, &sg);
  const int stopped = t2.stop_gradient(p);
  const int loss = t2.mean_all(t2.square(stopped));
  t2.backward(loss);
  CHECK(sg.isZero(0.0));  // no gradient through stop_gradient
}

TEST_CASE("adam zero gradient is identity, first step is -lr") {
  AdamConfig cfg;
  cfg.lr = 0.1;
  double w = 1.0;
  Adam opt(cfg, 1);
  opt.step_scalar(w, 0.0);
  CHECK(w == 1.0);

  // First step with g=1: mhat/sqrt(vhat) = 1, delta = -lr/(1 + eps') ~ -lr.
  double w2 = 1.0;
  Adam opt2(cfg, 1);
  opt2.step_scalar(w2, 1.0);
  // Hand recursion: m=0.1/0.1=1, v=0.001/0.001=1 after bias correction.
  const double expected = 1.0 - 0.1 * 1.0 / (std::sqrt(1.0) + cfg.eps);
  CHECK(w2 == doctest::Approx(expected).epsilon(1e-12));
  CHECK(opt2.step_count() == 1);
}

TEST_CASE("adam constant gradient is monotone") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  double w = 0.5;
  Adam opt(cfg, 1);
  double prev = w;
  for (int k = 0; k < 100; ++k) {
    opt.step_scalar(w, 2.5);
    CHECK(w < prev);
    prev = w;
  }

  double w2 = 0.5;
  Adam opt2(cfg, 1);
  prev = w2;
  for (int k = 0; k < 100; ++k) {
    opt2.step_scalar(w2, -2.5);
    CHECK(w2 > prev);
    prev = w2;
  }
}

TEST_CASE("adam rejects non-finite gradients") {
  Adam opt(AdamConfig{}, 1);
  double w = 0.0;
  CHECK_THROWS_AS(opt.step_scalar(w, std::nan("")), std::runtime_error);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(2024);
  DenseNet net = DenseNet::make({5, 7, 3}, Activation::Elu, rng);
  // Make values ugly on purpose.
  net.weights[0](0, 0) = 0.1 + 0.2;
  net.weights[1](2, 6) = -1.0 / 3.0;
  const std::string text = checkpoint::net_to_json(net);
  DenseNet back = checkpoint::net_from_json(text);
  CHECK(back.layer_sizes == net.layer_sizes);
  CHECK(back.activation == net.activation);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    CHECK((back.weights[l].array() == net.weights[l].array()).all());
    CHECK((back.biases[l].array() == net.biases[l].array()).all());
  }

  // Version gate.
  std::string bad = text;
  const auto pos = bad.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  bad.replace(pos, std::string("\"version\": 1").size(), "\"version\": 9");
  CHECK_THROWS(checkpoint::net_from_json(bad));
}

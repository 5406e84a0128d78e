#include "ecrl/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace ecrl::netgrad {

int Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back) {
  Node n;
  n.value = std::move(value);
  n.back = std::move(back);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = node(id);
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = g;
  else
    n.grad += g;
}

int Tape::constant(Mat v) { return push(std::move(v), false, nullptr); }

int Tape::param(const Mat& value, Mat* grad_sink) {
  return push(value, true, [grad_sink](Tape&, const Mat& g) {
    if (grad_sink) *grad_sink += g;
  });
}

int Tape::affine(int x, const Mat& W, Mat* dW, const Vec& b, Vec* db) {
  const Mat& X = value(x);
  if (X.cols() != W.cols()) throw std::invalid_argument("affine: shape mismatch");
  Mat y = X * W.transpose();
  y.rowwise() += b.transpose();
  // Copies of W and X live in the closure via the tape values; W is captured
  // by value because the caller may mutate the net between tapes.
  Mat Wc = W;
  return push(std::move(y), true, [x, Wc, dW, db](Tape& t, const Mat& g) {
    if (dW) dW->noalias() += g.transpose() * t.value(x);
    if (db) *db += g.colwise().sum().transpose();
    if (t.node(x).needs_grad) t.accumulate(x, g * Wc);
  });
}

int Tape::tanh_act(int x) {
  Mat y = value(x).array().tanh().matrix();
  const int id = push(std::move(y), node(x).needs_grad, nullptr);
  node(id).back = [x, id](Tape& t, const Mat& g) {
    t.accumulate(x, (g.array() * (1.0 - t.value(id).array().square())).matrix());
  };
  return id;
}

int Tape::elu_act(int x) {
  const Mat& X = value(x);
  Mat y = X.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
  const int id = push(std::move(y), node(x).needs_grad, nullptr);
  node(id).back = [x, id](Tape& t, const Mat& g) {
    const Mat& xv = t.value(x);
    const Mat& yv = t.value(id);
    Mat gx(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        gx(i, j) = g(i, j) * (xv(i, j) > 0.0 ? 1.0 : yv(i, j) + 1.0);
    t.accumulate(x, gx);
  };
  return id;
}

int Tape::add(int a, int b) {
  Mat y = value(a) + value(b);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(y), ng, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

int Tape::sub(int a, int b) {
  Mat y = value(a) - value(b);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(y), ng, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

int Tape::mul(int a, int b) {
  if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
    throw std::invalid_argument("mul: shape mismatch");
  Mat y = value(a).cwiseProduct(value(b));
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(y), ng, [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(t.value(b)));
    t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

int Tape::mul_rowvec(int a, int rv) {
  const Mat& A = value(a);
  const Mat& R = value(rv);
  if (R.rows() != 1 || R.cols() != A.cols())
    throw std::invalid_argument("mul_rowvec: shape mismatch");
  Mat y = (A.array().rowwise() * R.row(0).array()).matrix();
  const bool ng = node(a).needs_grad || node(rv).needs_grad;
  return push(std::move(y), ng, [a, rv](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array().rowwise() * t.value(rv).row(0).array()).matrix());
    if (t.node(rv).needs_grad)
      t.accumulate(rv, g.cwiseProduct(t.value(a)).colwise().sum());
  });
}

int Tape::add_scalar(int a, int s) {
  const Mat& S = value(s);
  if (S.rows() != 1 || S.cols() != 1) throw std::invalid_argument("add_scalar: scalar node required");
  Mat y = (value(a).array() + S(0, 0)).matrix();
  const bool ng = node(a).needs_grad || node(s).needs_grad;
  return push(std::move(y), ng, [a, s](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.node(s).needs_grad) {
      Mat gs(1, 1);
      gs(0, 0) = g.sum();
      t.accumulate(s, gs);
    }
  });
}

int Tape::scale(int a, double s) {
  Mat y = value(a) * s;
  return push(std::move(y), node(a).needs_grad, [a, s](Tape& t, const Mat& g) {
    t.accumulate(a, g * s);
  });
}

int Tape::add_const(int a, double c) {
  Mat y = (value(a).array() + c).matrix();
  return push(std::move(y), node(a).needs_grad, [a](Tape& t, const Mat& g) {
    t.accumulate(a, g);
  });
}

int Tape::exp_op(int a) {
  Mat y = value(a).array().exp().matrix();
  const int id = push(std::move(y), node(a).needs_grad, nullptr);
  node(id).back = [a, id](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(t.value(id)));
  };
  return id;
}

int Tape::log_op(int a) {
  Mat y = value(a).array().log().matrix();
  return push(std::move(y), node(a).needs_grad, [a](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseQuotient(t.value(a)));
  });
}

int Tape::square(int a) {
  Mat y = value(a).array().square().matrix();
  return push(std::move(y), node(a).needs_grad, [a](Tape& t, const Mat& g) {
    t.accumulate(a, 2.0 * g.cwiseProduct(t.value(a)));
  });
}

int Tape::relu(int a) {
  Mat y = value(a).cwiseMax(0.0);
  return push(std::move(y), node(a).needs_grad, [a](Tape& t, const Mat& g) {
    const Mat& xv = t.value(a);
    Mat gx = Mat::Zero(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        if (xv(i, j) > 0.0) gx(i, j) = g(i, j);
    t.accumulate(a, gx);
  });
}

int Tape::clamp(int a, double lo, double hi) {
  Mat y = value(a).cwiseMax(lo).cwiseMin(hi);
  return push(std::move(y), node(a).needs_grad, [a, lo, hi](Tape& t, const Mat& g) {
    const Mat& xv = t.value(a);
    Mat gx = Mat::Zero(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        if (xv(i, j) > lo && xv(i, j) < hi) gx(i, j) = g(i, j);
    t.accumulate(a, gx);
  });
}

int Tape::min_op(int a, int b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("min: shape mismatch");
  Mat y = A.cwiseMin(B);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(y), ng, [a, b](Tape& t, const Mat& g) {
    const Mat& A2 = t.value(a);
    const Mat& B2 = t.value(b);
    Mat ga = Mat::Zero(g.rows(), g.cols());
    Mat gb = ga;
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        (A2(i, j) <= B2(i, j) ? ga(i, j) : gb(i, j)) = g(i, j);
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

int Tape::max_op(int a, int b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("max: shape mismatch");
  Mat y = A.cwiseMax(B);
  const bool ng = node(a).needs_grad || node(b).needs_grad;
  return push(std::move(y), ng, [a, b](Tape& t, const Mat& g) {
    const Mat& A2 = t.value(a);
    const Mat& B2 = t.value(b);
    Mat ga = Mat::Zero(g.rows(), g.cols());
    Mat gb = ga;
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i)
        (A2(i, j) >= B2(i, j) ? ga(i, j) : gb(i, j)) = g(i, j);
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

int Tape::row_sum(int a) {
  Mat y = value(a).rowwise().sum();
  return push(std::move(y), node(a).needs_grad, [a](Tape& t, const Mat& g) {
    t.accumulate(a, g * Mat::Ones(1, t.value(a).cols()));
  });
}

int Tape::sum_all(int a) {
  Mat y(1, 1);
  y(0, 0) = value(a).sum();
  return push(std::move(y), node(a).needs_grad, [a](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0)));
  });
}

int Tape::mean_all(int a) {
  const double n = static_cast<double>(value(a).size());
  if (n == 0) throw std::invalid_argument("mean_all: empty node");
  Mat y(1, 1);
  y(0, 0) = value(a).sum() / n;
  return push(std::move(y), node(a).needs_grad, [a, n](Tape& t, const Mat& g) {
    t.accumulate(a, Mat::Constant(t.value(a).rows(), t.value(a).cols(), g(0, 0) / n));
  });
}

int Tape::signed_permute_cols(int a, const std::vector<int>& src, const Vec& sign) {
  const Mat& A = value(a);
  const auto n = static_cast<Eigen::Index>(src.size());
  if (n != A.cols() || sign.size() != n)
    throw std::invalid_argument("signed_permute_cols: shape mismatch");
  Mat y(A.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j)
    y.col(j) = sign[j] * A.col(src[static_cast<std::size_t>(j)]);
  std::vector<int> srcc = src;
  Vec signc = sign;
  return push(std::move(y), node(a).needs_grad, [a, srcc, signc](Tape& t, const Mat& g) {
    Mat ga = Mat::Zero(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      ga.col(srcc[static_cast<std::size_t>(j)]) += signc[j] * g.col(j);
    t.accumulate(a, ga);
  });
}

int Tape::stop_gradient(int a) { return push(value(a), false, nullptr); }

double Tape::scalar(int id) const {
  const Mat& v = value(id);
  if (v.rows() != 1 || v.cols() != 1) throw std::invalid_argument("scalar: node is not 1x1");
  return v(0, 0);
}

void Tape::backward(int loss) {
  const Mat& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward: loss must be a scalar node");
  node(loss).grad = Mat::Ones(1, 1);
  for (int id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n.grad);
  }
}

}  // namespace ecrl::netgrad

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace ecrl::netgrad {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Reverse-mode tape over batched matrices. Rows are batch samples. The op set
// is exactly what the training losses need; this is not a general graph
// compiler. Node ids are indices into the tape, so every op only references
// earlier nodes and the tape order is already topological.
//
// Parameter leaves accumulate their gradients into caller-owned buffers, so a
// single backward pass can feed several independent optimizers.
class Tape {
 public:
  // Leaf with no gradient.
  int constant(Mat v);

  // Leaf whose gradient is accumulated (+=) into *grad_sink on backward().
  int param(const Mat& value, Mat* grad_sink);

  // x: B x in, W: out x in, b: out. Computes X W^T + 1 b^T. Gradients for W
  // and b are accumulated into *dW / *db; pass nullptr to treat them as
  // constants.
  int affine(int x, const Mat& W, Mat* dW, const Vec& b, Vec* db);

  int tanh_act(int x);
  int elu_act(int x);  // alpha = 1

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);  // elementwise, equal shapes

  // a: B x n, rv: 1 x n; multiplies every row of a by rv elementwise.
  int mul_rowvec(int a, int rv);
  // a: any shape, s: 1 x 1; adds the scalar node to every entry.
  int add_scalar(int a, int s);

  int scale(int a, double s);
  int add_const(int a, double c);
  int exp_op(int a);
  int log_op(int a);
  int square(int a);
  int relu(int a);
  // Pass-through gradient strictly inside (lo, hi), zero outside.
  int clamp(int a, double lo, double hi);
  // Elementwise min/max; on ties the gradient goes to the first argument.
  int min_op(int a, int b);
  int max_op(int a, int b);

  int row_sum(int a);   // B x n -> B x 1
  int sum_all(int a);   // -> 1 x 1
  int mean_all(int a);  // -> 1 x 1

  // out(:, j) = sign[j] * a(:, src[j]).
  int signed_permute_cols(int a, const std::vector<int>& src, const Vec& sign);

  // Value passes through, gradient does not.
  int stop_gradient(int a);

  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  double scalar(int id) const;  // value of a 1 x 1 node

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be a 1 x 1 node.
  // Parameter gradients are accumulated into their sinks.
  void backward(int loss);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;                                  // allocated during backward
    std::function<void(Tape&, const Mat&)> back;  // nullptr for leaves
    bool needs_grad = false;
  };

  int push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back);
  void accumulate(int id, const Mat& g);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

  std::vector<Node> nodes_;
};

}  // namespace ecrl::netgrad

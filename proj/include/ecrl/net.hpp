#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "ecrl/rng.hpp"
#include "ecrl/tape.hpp"

namespace ecrl::netgrad {

enum class Activation { Tanh, Elu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Fully connected network, hidden activation on all but the last layer,
// identity output. All arithmetic is double precision.
struct DenseNet {
  std::vector<int> layer_sizes;  // [in, hidden..., out]
  Activation activation = Activation::Elu;
  std::vector<Mat> weights;  // one per layer, out x in
  std::vector<Vec> biases;

  // Xavier-uniform initialization.
  static DenseNet make(std::vector<int> sizes, Activation act, Rng& rng);

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  std::size_t num_params() const;
  bool all_finite() const;

  Vec forward(const Vec& x) const;
  Mat forward_batch(const Mat& X) const;  // rows are samples
};

// Gradient buffers mirroring a DenseNet's parameter shapes.
struct NetGrads {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  static NetGrads zeros_like(const DenseNet& net);
  void set_zero();
  bool all_finite() const;
};

// Records the network forward pass on the tape; parameter gradients land in
// *grads (may be nullptr to freeze the net). Returns the output node id.
int forward_on_tape(Tape& tape, const DenseNet& net, NetGrads* grads, int input_node);

// Flat mutable view over a set of parameter (or gradient) tensors.
struct ParamView {
  double* data = nullptr;
  std::ptrdiff_t size = 0;
};

std::vector<ParamView> param_views(DenseNet& net);
std::vector<ParamView> grad_views(NetGrads& grads);
std::size_t total_size(const std::vector<ParamView>& views);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over flattened parameter views. Throws on non-finite
// gradients so a poisoned update never lands.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, std::size_t num_params)
      : cfg_(cfg), m_(Vec::Zero(static_cast<Eigen::Index>(num_params))),
        v_(Vec::Zero(static_cast<Eigen::Index>(num_params))) {}

  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads);
  // Single-scalar convenience used by the dual variables.
  void step_scalar(double& param, double grad);

  long step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  Vec m_, v_;
};

}  // namespace ecrl::netgrad

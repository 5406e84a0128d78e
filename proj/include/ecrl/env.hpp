#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ecrl/policy.hpp"
#include "ecrl/rng.hpp"

namespace ecrl::env {

using netgrad::Mat;
using netgrad::Vec;
using policy::SignedPerm;

struct StepOutput {
  double reward = 0.0;
  Vec cost_channels;     // nonnegative; channel 0 energy (W), channel 1 mirror slot
  bool done = false;     // episode over for any reason
  bool truncated = false;  // over because the horizon was reached (bootstrap V)
  bool failure = false;    // non-finite state, aborted episode
};

// One independent environment instance. Owns its state and RNG; instances
// never share mutable data, so rollouts may run any number of them
// concurrently.
class Env {
 public:
  virtual ~Env() = default;

  virtual int obs_frame_dim() const = 0;
  virtual int priv_frame_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int num_cost_channels() const = 0;
  virtual int obs_frames() const = 0;   // K_f
  virtual int priv_frames() const = 0;
  virtual int horizon_steps() const = 0;
  virtual double control_dt() const = 0;

  virtual const SignedPerm& obs_mirror() const = 0;    // per single frame
  virtual const SignedPerm& action_mirror() const = 0;

  virtual void reset() = 0;
  virtual StepOutput step(const Vec& action) = 0;

  // Current (post-reset / post-step) observation frames.
  virtual Vec obs_frame() const = 0;
  virtual Vec priv_frame() const = 0;

  // Evaluation helpers.
  virtual double forward_speed() const = 0;
  virtual double tracking_error() const = 0;

  // Named physical quantities for CSV dumps (joint angles, torques, ...).
  virtual std::vector<std::pair<std::string, double>> telemetry() const = 0;
};

// Fixed-length frame history, oldest first. reset() fills every slot with the
// initial frame.
class FrameStacker {
 public:
  FrameStacker(int frames, int frame_dim)
      : frames_(frames), dim_(frame_dim),
        buf_(Vec::Zero(static_cast<Eigen::Index>(frames) * frame_dim)) {}

  void reset(const Vec& frame);
  void push(const Vec& frame);
  const Vec& stacked() const { return buf_; }
  int size() const { return static_cast<int>(buf_.size()); }

 private:
  int frames_;
  int dim_;
  Vec buf_;
};

}  // namespace ecrl::env

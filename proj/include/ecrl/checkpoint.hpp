#pragma once

#include <string>

#include "ecrl/net.hpp"
#include "ecrl/policy.hpp"

namespace ecrl::checkpoint {

// Versioned JSON checkpoints. Double values survive a save/load round trip
// bit-exactly (the writer emits shortest round-trip decimal forms).

constexpr int kFormatVersion = 1;

std::string net_to_json(const netgrad::DenseNet& net);
netgrad::DenseNet net_from_json(const std::string& text);

// Policy checkpoint: mean net plus log-std plus the observation scaling used
// at collection time, so evaluation reproduces training inputs exactly.
struct PolicyCheckpoint {
  policy::GaussianPolicy pi;
  netgrad::DenseNet critic_net;
  Eigen::VectorXd obs_scales;  // single-frame scaling vector
  int obs_frames = 1;
  int priv_frames = 1;
};

std::string policy_to_json(const PolicyCheckpoint& ckpt);
PolicyCheckpoint policy_from_json(const std::string& text);

void save_file(const std::string& path, const std::string& contents);
std::string load_file(const std::string& path);

}  // namespace ecrl::checkpoint

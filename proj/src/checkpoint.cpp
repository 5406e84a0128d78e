#include "ecrl/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ecrl::checkpoint {

using nlohmann::json;
using netgrad::DenseNet;
using netgrad::Mat;
using netgrad::Vec;

namespace {

json matrix_to_json(const Mat& M) {
  // Row-major flat array.
  json arr = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) arr.push_back(M(i, j));
  return arr;
}

Mat matrix_from_json(const json& arr, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<Eigen::Index>(arr.size()) != rows * cols)
    throw std::invalid_argument("checkpoint: parameter array size mismatch");
  Mat M(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = arr[static_cast<std::size_t>(k++)].get<double>();
  return M;
}

json vector_to_json(const Vec& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vec vector_from_json(const json& arr) {
  Vec v(static_cast<Eigen::Index>(arr.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = arr[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json net_to_json_obj(const DenseNet& net) {
  json j;
  j["layer_sizes"] = net.layer_sizes;
  j["activation"] = netgrad::activation_name(net.activation);
  json layers = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    json layer;
    layer["weight"] = matrix_to_json(net.weights[l]);
    layer["bias"] = vector_to_json(net.biases[l]);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

DenseNet net_from_json_obj(const json& j) {
  DenseNet net;
  net.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  net.activation = netgrad::activation_from_name(j.at("activation").get<std::string>());
  const json& layers = j.at("layers");
  if (layers.size() + 1 != net.layer_sizes.size())
    throw std::invalid_argument("checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Eigen::Index out = net.layer_sizes[l + 1];
    const Eigen::Index in = net.layer_sizes[l];
    net.weights.push_back(matrix_from_json(layers[l].at("weight"), out, in));
    Vec b = vector_from_json(layers[l].at("bias"));
    if (b.size() != out) throw std::invalid_argument("checkpoint: bias size mismatch");
    net.biases.push_back(std::move(b));
  }
  return net;
}

void check_version(const json& j) {
  const int v = j.at("version").get<int>();
  if (v != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(v));
}

}  // namespace

std::string net_to_json(const DenseNet& net) {
  json j = net_to_json_obj(net);
  j["version"] = kFormatVersion;
  return j.dump(2);
}

DenseNet net_from_json(const std::string& text) {
  json j = json::parse(text);
  check_version(j);
  return net_from_json_obj(j);
}

std::string policy_to_json(const PolicyCheckpoint& ckpt) {
  json j;
  j["version"] = kFormatVersion;
  j["kind"] = "policy";
  j["mean_net"] = net_to_json_obj(ckpt.pi.mean_net);
  j["log_std"] = vector_to_json(ckpt.pi.log_std);
  j["critic_net"] = net_to_json_obj(ckpt.critic_net);
  j["obs_scales"] = vector_to_json(ckpt.obs_scales);
  j["obs_frames"] = ckpt.obs_frames;
  j["priv_frames"] = ckpt.priv_frames;
  return j.dump(2);
}

PolicyCheckpoint policy_from_json(const std::string& text) {
  json j = json::parse(text);
  check_version(j);
  PolicyCheckpoint ckpt;
  ckpt.pi.mean_net = net_from_json_obj(j.at("mean_net"));
  ckpt.pi.log_std = vector_from_json(j.at("log_std"));
  ckpt.critic_net = net_from_json_obj(j.at("critic_net"));
  ckpt.obs_scales = vector_from_json(j.at("obs_scales"));
  ckpt.obs_frames = j.at("obs_frames").get<int>();
  ckpt.priv_frames = j.at("priv_frames").get<int>();
  return ckpt;
}

void save_file(const std::string& path, const std::string& contents) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  os << contents;
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::string load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace ecrl::checkpoint

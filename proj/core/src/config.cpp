#include "tp3m/config.hpp"

#include <fstream>
#include <stdexcept>

namespace tp3m {

const std::vector<ConfigKey>& RunConfig::schema() {
  static const std::vector<ConfigKey> keys = {
      {"synth.size", "64", "image side length, divisible by 8"},
      {"synth.rot_deg", "8.0", "destination viewpoint rotation magnitude (degrees)"},
      {"synth.trans_frac", "0.08", "destination translation as a fraction of scene depth"},
      {"synth.ref_scale", "0.25", "reference perturbation relative to destination (< 1)"},
      {"synth.brightness", "0.06", "photometric brightness offset magnitude"},
      {"synth.contrast", "0.12", "photometric contrast gain magnitude"},
      {"synth.noise_sigma", "0.01", "additive Gaussian pixel noise"},
      {"synth.octaves", "4", "texture noise octaves (density)"},
      {"synth.shapes", "6", "number of hard-edged shapes in the texture"},
      {"match.omega", "0.1", "similarity temperature"},
      {"match.theta3", "0.2", "confidence threshold, level 3"},
      {"match.theta2", "0.2", "confidence threshold, level 2"},
      {"match.theta1", "0.2", "confidence threshold, level 1 windows"},
      {"match.n3", "32", "min level-3 matches to descend"},
      {"match.n2", "64", "min level-2 matches to descend"},
      {"match.fine_radius", "8", "level-1 search radius around level-2 matches (px)"},
      {"m3d.lambda", "1.0", "guidance logit bonus near coarse matches"},
      {"m3d.guide_radius", "1", "guidance radius (level-3 tokens)"},
      {"m3d.window", "5", "sliding window size along edge chains"},
      {"m3d.tau_win", "0.3", "per-point probability threshold in the window"},
      {"m3d.k_min", "3", "consecutive accepted points required"},
      {"m3d.edge_token_thresh", "0.5", "edge-map threshold for edge tokens"},
      {"edge.w_min", "0.05", "significance weight floor"},
      {"edge.canny_low", "0.1", "Canny low threshold (fraction of max gradient)"},
      {"edge.canny_high", "0.2", "Canny high threshold (fraction of max gradient)"},
      {"edge.canny_sigma", "1.0", "Canny Gaussian sigma"},
      {"train.lr_edge", "0.001", "Adam learning rate, edge phase"},
      {"train.lr_joint", "0.001", "Adam learning rate, joint phase"},
      {"train.beta1", "0.9", "Adam beta1"},
      {"train.beta2", "0.999", "Adam beta2"},
      {"train.eps", "1e-8", "Adam epsilon"},
      {"train.batch", "2", "pairs per joint step"},
      {"train.edge_steps", "200", "edge pretraining steps"},
      {"train.joint_steps", "0", "joint steps override (0: derive from epochs)"},
      {"train.theta_loss", "0.2", "confidence threshold selecting position-loss terms"},
      {"train.delta0", "1.0", "position-loss sharpness scale (tokens)"},
      {"eval.ransac_iters", "2000", "RANSAC max iterations"},
      {"eval.h_thresh_px", "3.0", "homography inlier threshold (px)"},
      {"eval.f_thresh", "0.001", "fundamental inlier threshold (normalized units)"},
      {"eval.confidence", "0.999", "RANSAC early-exit confidence"},
      {"eval.epi_tau", "0.0005", "epipolar precision threshold (normalized units)"},
      {"eval.seed", "0", "RANSAC seed"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.key] = k.default_value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: missing '=' at " + path + ":" + std::to_string(lineno));
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    const auto vs = value.find_first_not_of(" \t");
    value = vs == std::string::npos ? "" : value.substr(vs);
    set(key, value);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("config: unknown key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("config: unknown key '" + key + "'");
  return it->second;
}

double RunConfig::get_d(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not a number: " + get(key));
  }
}

int RunConfig::get_i(const std::string& key) const {
  try {
    return std::stoi(get(key));
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not an integer: " + get(key));
  }
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(get(key));
  } catch (const std::exception&) {
    throw std::runtime_error("config: key '" + key + "' is not an integer: " + get(key));
  }
}

std::vector<std::string> RunConfig::echo_lines() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) out.push_back("cfg " + k + "=" + v);
  return out;
}

}  // namespace tp3m

#pragma once

#include <cstdint>
#include <vector>

#include "tp3m/params.hpp"
#include "tp3m/tensor.hpp"

namespace tp3m {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments for a single parameter tensor.
struct AdamParamState {
  std::vector<double> m;
  std::vector<double> v;
};

// One bias-corrected Adam update. `step` is the 1-based step count after
// this update.
void adam_step(Tensor& param, const std::vector<double>& grad, AdamParamState& state,
               std::int64_t step, const AdamConfig& cfg);

// Drives adam_step over a fixed set of parameters using their .grad buffers.
class Adam {
 public:
  Adam(std::vector<Tensor*> params, AdamConfig cfg);

  void step();
  std::int64_t step_count() const { return step_; }

  // Moments serialized as checkpoint records under `prefix` ("adam.m.0",
  // "adam.v.0", ... plus "adam.step"), indexed by parameter position.
  std::vector<CheckpointRecord> snapshot(const std::string& prefix) const;
  void restore(const std::vector<CheckpointRecord>& records, const std::string& prefix);

 private:
  std::vector<Tensor*> params_;
  std::vector<AdamParamState> state_;
  AdamConfig cfg_;
  std::int64_t step_ = 0;
};

}  // namespace tp3m

#include "tp3m/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tp3m {

void adam_step(Tensor& param, const std::vector<double>& grad, AdamParamState& state,
               std::int64_t step, const AdamConfig& cfg) {
  const std::size_t n = param.data->size();
  if (grad.size() != n) throw std::runtime_error("adam_step: grad shape mismatch");
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  double* p = param.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(std::vector<Tensor*> params, AdamConfig cfg)
    : params_(std::move(params)), state_(params_.size()), cfg_(cfg) {}

void Adam::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_step(*params_[i], *params_[i]->grad, state_[i], step_, cfg_);
  }
}

std::vector<CheckpointRecord> Adam::snapshot(const std::string& prefix) const {
  std::vector<CheckpointRecord> records;
  records.push_back({prefix + "step", {1}, {static_cast<double>(step_)}});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string idx = std::to_string(i);
    if (state_[i].m.empty()) continue;
    records.push_back({prefix + "m." + idx, params_[i]->shape, state_[i].m});
    records.push_back({prefix + "v." + idx, params_[i]->shape, state_[i].v});
  }
  return records;
}

void Adam::restore(const std::vector<CheckpointRecord>& records, const std::string& prefix) {
  for (const auto& r : records) {
    if (r.name.rfind(prefix, 0) != 0) continue;
    const std::string tail = r.name.substr(prefix.size());
    if (tail == "step") {
      step_ = static_cast<std::int64_t>(r.values.at(0));
      continue;
    }
    const bool is_m = tail.rfind("m.", 0) == 0;
    const bool is_v = tail.rfind("v.", 0) == 0;
    if (!is_m && !is_v) continue;
    const std::size_t i = static_cast<std::size_t>(std::stoull(tail.substr(2)));
    if (i >= params_.size()) throw std::runtime_error("adam restore: index out of range");
    if (r.values.size() != params_[i]->data->size())
      throw std::runtime_error("adam restore: moment shape mismatch");
    if (is_m)
      state_[i].m = r.values;
    else
      state_[i].v = r.values;
  }
}

}  // namespace tp3m

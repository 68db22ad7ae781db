#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tp3m/tensor.hpp"

namespace tp3m {

// One named array in a checkpoint file.
struct CheckpointRecord {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

// Flat binary container: 8-byte magic, u32 version, u64 record count, then
// per record u32 name length, name bytes, u32 ndim, u32 dims, raw
// little-endian float64 payload. Round-trips byte-exactly.
void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records);
std::vector<CheckpointRecord> load_checkpoint(const std::string& path);

// Owns the trainable parameters. Each parameter's initial values come from
// a stream derived from (seed, name), so creation order does not matter.
// Initialization is uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
class ParamRegistry {
 public:
  explicit ParamRegistry(std::uint64_t seed) : seed_(seed) {}

  Tensor& create(const std::string& name, std::vector<int> shape, int fan_in);
  Tensor& create_zeros(const std::string& name, std::vector<int> shape);

  Tensor* find(const std::string& name);
  const std::map<std::string, Tensor>& all() const { return params_; }

  // Parameters whose name starts with `prefix` ("" selects all), in name order.
  std::vector<Tensor*> select(const std::string& prefix);

  void zero_grad();

  std::vector<CheckpointRecord> snapshot() const;
  // Copies values into existing parameter storage; throws on unknown name or
  // shape mismatch. Records not describing parameters (no matching name) are
  // returned to the caller untouched.
  std::vector<CheckpointRecord> restore(const std::vector<CheckpointRecord>& records);

 private:
  std::uint64_t seed_;
  std::map<std::string, Tensor> params_;
};

}  // namespace tp3m

#include "tp3m/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "tp3m/rng.hpp"

namespace tp3m {

namespace {

constexpr char kMagic[8] = {'T', 'P', '3', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::uint32_t>(os, kVersion);
  write_pod<std::uint64_t>(os, records.size());
  for (const auto& r : records) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(r.shape.size()));
    std::uint64_t n = 1;
    for (int d : r.shape) {
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
      n *= static_cast<std::uint64_t>(d);
    }
    if (n != r.values.size()) throw std::runtime_error("checkpoint: record shape/data mismatch");
    os.write(reinterpret_cast<const char*>(r.values.data()),
             static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::vector<CheckpointRecord> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto count = read_pod<std::uint64_t>(is);
  std::vector<CheckpointRecord> records;
  records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointRecord r;
    const auto name_len = read_pod<std::uint32_t>(is);
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(is);
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = read_pod<std::uint32_t>(is);
      r.shape.push_back(static_cast<int>(dim));
      n *= dim;
    }
    r.values.resize(n);
    is.read(reinterpret_cast<char*>(r.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated record in " + path);
    records.push_back(std::move(r));
  }
  return records;
}

Tensor& ParamRegistry::create(const std::string& name, std::vector<int> shape, int fan_in) {
  if (params_.count(name)) throw std::runtime_error("param already exists: " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  Rng rng(Rng::derive(seed_, name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : *t.data) v = rng.uniform(-bound, bound);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamRegistry::create_zeros(const std::string& name, std::vector<int> shape) {
  if (params_.count(name)) throw std::runtime_error("param already exists: " + name);
  auto [it, ok] = params_.emplace(name, Tensor::zeros(std::move(shape), true));
  (void)ok;
  return it->second;
}

Tensor* ParamRegistry::find(const std::string& name) {
  auto it = params_.find(name);
  return it == params_.end() ? nullptr : &it->second;
}

std::vector<Tensor*> ParamRegistry::select(const std::string& prefix) {
  std::vector<Tensor*> out;
  for (auto& [name, t] : params_) {
    if (name.rfind(prefix, 0) == 0) out.push_back(&t);
  }
  return out;
}

void ParamRegistry::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::vector<CheckpointRecord> ParamRegistry::snapshot() const {
  std::vector<CheckpointRecord> records;
  records.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    records.push_back({name, t.shape, *t.data});
  }
  return records;
}

std::vector<CheckpointRecord> ParamRegistry::restore(
    const std::vector<CheckpointRecord>& records) {
  std::vector<CheckpointRecord> leftover;
  for (const auto& r : records) {
    auto it = params_.find(r.name);
    if (it == params_.end()) {
      leftover.push_back(r);
      continue;
    }
    if (it->second.shape != r.shape)
      throw std::runtime_error("checkpoint: shape mismatch for parameter " + r.name);
    *it->second.data = r.values;
  }
  return leftover;
}

}  // namespace tp3m

#include "tp3m/model.hpp"

#include <filesystem>
#include <set>
#include <stdexcept>

namespace tp3m {

std::vector<CheckpointRecord> Model::load(const std::string& path) {
  const auto records = load_checkpoint(path);
  std::set<std::string> provided;
  for (const auto& r : records) provided.insert(r.name);
  std::string missing;
  for (const auto& [name, t] : reg.all()) {
    if (!provided.count(name)) missing += missing.empty() ? name : ", " + name;
  }
  if (!missing.empty())
    throw std::runtime_error("checkpoint incompatible, missing parameters: " + missing);
  return reg.restore(records);
}

void Model::save(const std::string& path, const std::vector<CheckpointRecord>& extra) const {
  std::vector<CheckpointRecord> records = reg.snapshot();
  records.insert(records.end(), extra.begin(), extra.end());
  const std::string tmp = path + ".tmp";
  save_checkpoint(tmp, records);
  std::filesystem::rename(tmp, path);
}

}  // namespace tp3m

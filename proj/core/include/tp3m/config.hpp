#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tp3m {

struct ConfigKey {
  const char* key;
  const char* default_value;
  const char* desc;
};

// Flat key=value configuration. Precedence: defaults < file < explicit sets.
// Unknown keys are a hard error in both files and sets.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& schema();

  // Plain-text key=value file; '#' starts a comment.
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_d(const std::string& key) const;
  int get_i(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  // Sorted key=value lines for output-file provenance headers.
  std::vector<std::string> echo_lines() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace tp3m

#pragma once

#include <string>
#include <vector>

namespace tp3m {

// Row-normalized attention weights captured during a forward pass.
struct AttentionRecord {
  std::string tag;
  int rows = 0;
  int cols = 0;
  std::vector<double> weights;
};

class AttentionRecorder {
 public:
  void add(std::string tag, int rows, int cols, std::vector<double> weights) {
    records_.push_back({std::move(tag), rows, cols, std::move(weights)});
  }
  const std::vector<AttentionRecord>& records() const { return records_; }
  const AttentionRecord* find(const std::string& tag) const {
    for (const auto& r : records_)
      if (r.tag == tag) return &r;
    return nullptr;
  }
  void clear() { records_.clear(); }

 private:
  std::vector<AttentionRecord> records_;
};

// Binary grid: magic "TP3MATT1", u32 rows, u32 cols, row-major float32.
// Exports round-trip bit-exactly.
void save_attention_map(const AttentionRecord& record, const std::string& path);
AttentionRecord load_attention_map(const std::string& path);

}  // namespace tp3m

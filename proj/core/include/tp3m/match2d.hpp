#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tp3m/attention_export.hpp"
#include "tp3m/edgefeat.hpp"
#include "tp3m/ops.hpp"
#include "tp3m/params.hpp"

namespace tp3m {

enum class MatchStatus { ok, failed_small_overlap, failed_challenging };

std::string to_string(MatchStatus s);
MatchStatus match_status_from_string(const std::string& s);

enum class Provenance { coarse, fine };

struct Match {
  double xa = 0, ya = 0, xb = 0, yb = 0;
  double conf = 0;
  Provenance prov = Provenance::coarse;
};

struct MatchSet {
  std::vector<Match> matches;
  MatchStatus status = MatchStatus::ok;
};

// Token-level correspondence on a level grid (flat indices).
struct TokenMatch {
  int a_idx = 0;
  int b_idx = 0;
  double conf = 0;
};

struct CascadeConfig {
  double theta3 = 0.2, theta2 = 0.2, theta1 = 0.2;
  int n3 = 32, n2 = 64;
  int fine_radius_px = 8;  // level-1 search window radius around level-2 matches
  double omega = 0.1;      // similarity temperature
};

// Plain copy of a confidence matrix for export/inspection.
struct ConfMat {
  int level = 0;
  int rows = 0, cols = 0;
  std::vector<double> p;
};

// P(i,j) = softmax_row(S)_ij * softmax_col(S)_ij.
Tensor dual_softmax(const Tensor& s);

// Mutual-nearest-neighbour filter with confidence threshold; argmax ties go
// to the lowest index.
std::vector<TokenMatch> mnn_filter(const Tensor& p, double theta);

// One shared-weight cross-attention block (Q from self, K/V from other,
// residual added). Using the same weights for both directions keeps the op
// symmetric: identical token sets yield identical outputs.
struct CrossAttnBlock {
  Tensor *wq, *wk, *wv, *wo;

  CrossAttnBlock(ParamRegistry& reg, const std::string& prefix, int dim);
  Tensor apply(const Tensor& self_tokens, const Tensor& other_tokens,
               AttentionRecorder* recorder = nullptr, const std::string& tag = "") const;
};

struct CascadeResult {
  MatchSet set;
  std::vector<ConfMat> confidences;    // levels that ran, coarsest first
  std::vector<TokenMatch> level3, level2;
  bool level2_ran = false, level1_ran = false;
};

// Cascade 2D matcher over feature pyramids: level 3 always, descending only
// while the per-level match-count gates pass; level 1 searches windows
// around upsampled level-2 matches.
class Matcher2D {
 public:
  Matcher2D(ParamRegistry& reg, PyramidDims dims = {});

  // level is 3 or 2. Returns F_A', F_B' after mutual cross-attention.
  std::pair<Tensor, Tensor> cross_attention_features(int level, const Tensor& fa,
                                                     const Tensor& fb,
                                                     AttentionRecorder* recorder = nullptr,
                                                     const std::string& tag_prefix = "") const;

  // Dual-softmax confidence matrix over cross-attended tokens.
  Tensor confidence_matrix(int level, const Tensor& fa, const Tensor& fb, double omega,
                           AttentionRecorder* recorder = nullptr,
                           const std::string& tag_prefix = "") const;

  CascadeResult cascade_match(const FeaturePyramid& pa, const FeaturePyramid& pb,
                              const CascadeConfig& cfg,
                              AttentionRecorder* recorder = nullptr) const;

 private:
  CrossAttnBlock l3_, l2_;
};

// Match file: `# tp3m-matches v1 status=... mode=...` header, optional
// further `# key=value` comment lines, then
// x_a<TAB>y_a<TAB>x_b<TAB>y_b<TAB>conf<TAB>provenance rows.
void write_matches(const std::string& path, const MatchSet& set, const std::string& mode,
                   const std::vector<std::string>& extra_header = {});
struct MatchFile {
  MatchSet set;
  std::string mode;
};
MatchFile read_matches(const std::string& path);

}  // namespace tp3m

#pragma once

#include "tp3m/image.hpp"
#include "tp3m/match2d.hpp"
#include "tp3m/params.hpp"

namespace tp3m {

struct WindowFilterConfig {
  int window = 5;       // odd, >= 3
  double tau_win = 0.3; // per-point probability threshold
  int k_min = 3;        // consecutive accepted points required (<= window)
};

struct GuidanceConfig {
  double lambda = 1.0;  // logit bonus near coarse matches; 0 disables guidance
  int radius = 1;       // token radius around each coarse match
};

// A P_2D-3D row candidate ordered along an edge chain.
struct FineCandidate {
  int a_idx = 0;       // source token (flat, level-3 grid)
  int b_idx = 0;       // argmax target token
  double prob = 0;     // P_2D-3D(a_idx, b_idx)
  int chain = 0;       // edge chain id
  int chain_pos = 0;   // position along the chain
  double xb = 0, yb = 0;  // sub-token target, level-3 grid units
};

// Cross-attention from pseudo-3D queries to 2D keys/values (one direction,
// the 2D side stays untouched), then dual softmax over the similarity with
// an additive logit bonus near coarse matches.
class Matcher3D {
 public:
  Matcher3D(ParamRegistry& reg, int d3 = 64);

  // grid dims apply to both token sets; coarse matches are full-resolution
  // pixel matches, mapped onto the level-3 grid for guidance.
  Tensor p2d3d(const Tensor& f3d, const Tensor& fb3, const std::vector<Match>& coarse,
               int grid_h, int grid_w, int img_h, int img_w, double omega,
               const GuidanceConfig& guide, AttentionRecorder* recorder = nullptr,
               const std::string& tag = "cross_3d") const;

 private:
  CrossAttnBlock blk_;
};

// Deterministic edge-token chains: a token is an edge token when the max
// edge-map value inside its cell passes `token_thresh`; chains walk 8-connected
// components, always stepping to the lexicographically smallest unvisited
// neighbour.
std::vector<std::vector<int>> edge_token_chains(const Image& edge_map, int grid_h, int grid_w,
                                                double token_thresh);

// Candidates along chains from P_2D-3D: per chain token, the row argmax plus
// an expectation over its 3x3 neighbourhood for the sub-token position.
std::vector<FineCandidate> fine_candidates(const Tensor& p, const std::vector<std::vector<int>>& chains,
                                           int grid_w);

// Accept a candidate iff it lies in a run of >= k_min chain-consecutive
// candidates with prob >= tau_win (all runs fit a window of size `window`).
std::vector<FineCandidate> sliding_window_filter(const std::vector<FineCandidate>& candidates,
                                                 const WindowFilterConfig& cfg);

// Fine matches win at shared source tokens; remaining coarse matches are
// kept; output sources are unique.
MatchSet merge_coarse_fine(const MatchSet& coarse, const MatchSet& fine, int token_px = 8);

// Convert accepted candidates to full-resolution matches (provenance fine).
MatchSet candidates_to_matches(const std::vector<FineCandidate>& accepted, int grid_w,
                               int token_px = 8);

}  // namespace tp3m

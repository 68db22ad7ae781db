#pragma once

#include "tp3m/match2d.hpp"
#include "tp3m/ops.hpp"
#include "tp3m/params.hpp"

namespace tp3m {

// d_pos = 5 scalars * 2 (sin/cos) * kPosFreqs
constexpr int kPosFreqs = 8;
constexpr int kPosDim = 5 * 2 * kPosFreqs;

// Per-source-token position features from A<->C matches: the 5-vector
// (x_A, y_A, x_C, y_C, conf), coordinates normalized to [0,1], expanded by a
// sinusoidal encoding. Tokens without a match stay zero. Matches are reduced
// to the level-3 grid by keeping the highest-confidence entry per token.
Tensor build_position_features(const MatchSet& matches_ac, int grid_h, int grid_w, int img_h,
                               int img_w);

// Two nonlinear layers mapping d_pos -> d3; the output already has the 2D
// feature dimension so it can be fused by addition (no trailing FC). Zero
// input maps to zero output while biases are zero.
class PositionTransform {
 public:
  PositionTransform(ParamRegistry& reg, int d3 = 64);
  Tensor apply(const Tensor& pos) const;

 private:
  Tensor *w1_, *b1_, *w2_, *b2_;
};

// F_3D = F_A(level 3 tokens) + transformed position features.
Tensor fuse(const Tensor& fa3_tokens, const Tensor& transformed_pos);

}  // namespace tp3m

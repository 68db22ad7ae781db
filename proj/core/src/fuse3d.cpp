#include "tp3m/fuse3d.hpp"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace tp3m {

Tensor build_position_features(const MatchSet& matches_ac, int grid_h, int grid_w, int img_h,
                               int img_w) {
  const int cell_h = img_h / grid_h;
  const int cell_w = img_w / grid_w;
  std::set<std::pair<double, double>> seen_sources;
  std::map<int, const Match*> best_per_token;
  for (const auto& m : matches_ac.matches) {
    if (m.xa < 0 || m.ya < 0 || m.xa > img_w - 1 || m.ya > img_h - 1)
      throw std::runtime_error("build_position_features: match outside grid");
    if (!seen_sources.insert({m.xa, m.ya}).second)
      throw std::runtime_error("build_position_features: duplicate source coordinate");
    const int tr = static_cast<int>(m.ya) / cell_h;
    const int tc = static_cast<int>(m.xa) / cell_w;
    const int idx = tr * grid_w + tc;
    auto it = best_per_token.find(idx);
    if (it == best_per_token.end() || m.conf > it->second->conf) best_per_token[idx] = &m;
  }

  Tensor out = Tensor::zeros({grid_h * grid_w, kPosDim});
  for (const auto& [idx, m] : best_per_token) {
    const double vals[5] = {m->xa / (img_w - 1), m->ya / (img_h - 1), m->xb / (img_w - 1),
                            m->yb / (img_h - 1), m->conf};
    double* row = out.ptr() + static_cast<std::size_t>(idx) * kPosDim;
    int o = 0;
    for (double v : vals) {
      double freq = M_PI;
      for (int f = 0; f < kPosFreqs; ++f) {
        row[o++] = std::sin(freq * v);
        row[o++] = std::cos(freq * v);
        freq *= 2.0;
      }
    }
  }
  return out;
}

PositionTransform::PositionTransform(ParamRegistry& reg, int d3) {
  w1_ = &reg.create("fuse.w1", {kPosDim, d3}, kPosDim);
  b1_ = &reg.create_zeros("fuse.b1", {d3});
  w2_ = &reg.create("fuse.w2", {d3, d3}, d3);
  b2_ = &reg.create_zeros("fuse.b2", {d3});
}

Tensor PositionTransform::apply(const Tensor& pos) const {
  return tanh_t(linear(tanh_t(linear(pos, *w1_, *b1_)), *w2_, *b2_));
}

Tensor fuse(const Tensor& fa3_tokens, const Tensor& transformed_pos) {
  return add(fa3_tokens, transformed_pos);
}

}  // namespace tp3m

#pragma once

#include <cstdint>
#include <string>

#include "tp3m/edgefeat.hpp"
#include "tp3m/fuse3d.hpp"
#include "tp3m/match2d.hpp"
#include "tp3m/match3d.hpp"
#include "tp3m/params.hpp"

namespace tp3m {

// The full network set behind one parameter registry: edge extractor,
// per-level 2D matcher blocks, position transform, pseudo-3D matcher.
struct Model {
  ParamRegistry reg;
  PyramidDims dims;
  EdgeExtractor extractor;
  Matcher2D matcher2d;
  PositionTransform pos_transform;
  Matcher3D matcher3d;

  explicit Model(std::uint64_t seed)
      : reg(seed), extractor(reg, dims), matcher2d(reg, dims), pos_transform(reg, dims.d3),
        matcher3d(reg, dims.d3) {}

  // Loads parameter values from a checkpoint; every model parameter must be
  // present. Returns the records that were not parameters (optimizer state).
  std::vector<CheckpointRecord> load(const std::string& path);
  void save(const std::string& path, const std::vector<CheckpointRecord>& extra = {}) const;
};

}  // namespace tp3m

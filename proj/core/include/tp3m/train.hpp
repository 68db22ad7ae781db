#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tp3m/match3d.hpp"
#include "tp3m/model.hpp"
#include "tp3m/optim.hpp"
#include "tp3m/synthgen.hpp"

namespace tp3m {

// Token-level ground-truth pair with its significance weight.
struct GtPair {
  int a_idx = 0;
  int b_idx = 0;
  double w = 1.0;
};

// Level-3 pair whose source token carries a known 3D point; (jx, jy) is the
// exact target position in level-3 token units.
struct Gt3D {
  int a_idx = 0;
  int b_idx = 0;
  double jx = 0, jy = 0;
  double w = 1.0;
};

struct GroundTruth {
  std::vector<GtPair> l3, l2;
  std::vector<Gt3D> m3d;
};

struct TrainSettings {
  int edge_steps = 200;
  double lr_edge = 1e-3;
  double lr_joint = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int batch = 2;
  double theta_loss = 0.2;
  double delta0 = 1.0;
  double w_min = 0.05;
  double canny_low = 0.1, canny_high = 0.2, canny_sigma = 1.0;
  int joint_steps_override = 0;  // > 0 wins over epochs
  CascadeConfig cascade;
  GuidanceConfig guide;
};

struct LossReport {
  double total = 0, l2d2d = 0, l2d3d = 0, l3d = 0;
  int l3d_skipped = 0;  // gt pairs below the confidence threshold
};

// Mutual-nearest-reprojection correspondences on the token grids of levels 3
// and 2, restricted to source tokens containing edge pixels, weighted by the
// Laplacian significance of both endpoints.
GroundTruth build_ground_truth(const SceneSample& sample, const PyramidDims& dims,
                               const TrainSettings& ts);

// mean over pairs of -w * log P(i,j)
Tensor weighted_nll(const Tensor& p, const std::vector<GtPair>& pairs);
Tensor loss_2d2d(const Tensor& p, const std::vector<GtPair>& pairs);
Tensor loss_2d3d(const Tensor& p, const std::vector<Gt3D>& pairs);

struct Loss3DResult {
  Tensor value;
  int skipped = 0;
};
// Distance penalty between the soft-argmax position and the ground-truth
// position, evaluated only where the row confidence clears theta_loss, with
// per-row sharpness delta(i) = delta0 / max_j P(i,j).
Loss3DResult loss_3d(const Tensor& p, const std::vector<Gt3D>& pairs, double theta_loss,
                     double delta0, int grid_w);

// Two-phase toy trainer: edge head first (pixelwise BCE against Canny), then
// the matching/fusion networks jointly with the extractor frozen.
class Trainer {
 public:
  Trainer(Model& model, TrainSettings settings);

  // Writes the loss curve (one line per joint step) and the checkpoint.
  // `resume_path` continues from a previous checkpoint of the same model.
  std::vector<LossReport> run(const std::vector<SceneSample>& samples, int epochs,
                              std::uint64_t seed, const std::string& loss_curve_path,
                              const std::string& ckpt_path, const std::string& resume_path = "",
                              const std::vector<std::string>& curve_header = {});

 private:
  Model& model_;
  TrainSettings ts_;
};

}  // namespace tp3m

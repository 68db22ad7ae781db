#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tp3m/geometry.hpp"
#include "tp3m/image.hpp"

namespace tp3m {

// Magnitudes controlling how far the destination (and, scaled down, the
// reference) view departs from the source.
struct PerturbationSpec {
  double rot_deg = 8.0;      // viewpoint rotation magnitude, degrees
  double trans_frac = 0.08;  // translation as a fraction of scene depth
  double ref_scale = 0.25;   // reference perturbation relative to destination; must be < 1
  double brightness = 0.06;  // photometric offset magnitude
  double contrast = 0.12;    // photometric gain magnitude
  double noise_sigma = 0.01; // additive Gaussian noise
  int texture_octaves = 4;   // texture density
  int shape_count = 6;

  void validate() const;
};

struct JitterRecord {
  double offset = 0.0;
  double gain = 1.0;
  double noise_sigma = 0.0;
};

// A source/reference/destination triplet with exact ground truth.
struct SceneSample {
  std::string id;
  bool planar = false;
  int size = 0;
  Image a, b, c;
  Mat3 k = Mat3::Identity();
  Pose pose_a, pose_b, pose_c;
  Image depth_a, depth_b, depth_c;  // camera-frame depth; 0 marks invalid
  std::vector<std::array<double, 4>> gt_ab, gt_ac;  // x_a y_a x_b y_b
  bool has_homography = false;
  Mat3 h_ab = Mat3::Identity();
  bool essential_degenerate = false;  // pure-rotation A->B pair
  JitterRecord jitter_b, jitter_c;
  int grid_step = 4;
};

// Raised when a drawn scene has too little covisibility; callers retry with
// a derived seed.
struct SynthRegenerate : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inverse-warp with bilinear sampling; H maps input pixels to output pixels.
// Out-of-bounds samples are 0. Throws on a singular H.
Image warp_image(const Image& input, const Mat3& h);

SceneSample gen_planar(std::uint64_t seed, const PerturbationSpec& spec, int size = 64);
SceneSample gen_3d(std::uint64_t seed, const PerturbationSpec& spec, int size = 64);

// scene_<id>/ directory layout: a.pgm b.pgm c.pgm, meta.json,
// depth_{a,b,c}.bin (little-endian float32), gt_ab.tsv, gt_ac.tsv.
void write_sample(const std::string& dir, const SceneSample& sample);
SceneSample read_sample(const std::string& dir);

}  // namespace tp3m

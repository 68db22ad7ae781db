#pragma once

#include "tp3m/attention_export.hpp"
#include "tp3m/image.hpp"
#include "tp3m/ops.hpp"
#include "tp3m/params.hpp"

namespace tp3m {

// Fixed pyramid dims: full-resolution d1, quarter d2, eighth d3.
struct PyramidDims {
  int d1 = 16;
  int d2 = 32;
  int d3 = 64;
};

struct FeaturePyramid {
  Tensor f1;           // {d1, H,   W}
  Tensor f2;           // {d2, H/4, W/4}
  Tensor f3;           // {d3, H/8, W/8}
  Tensor edge_logits;  // {1, H, W}, pre-sigmoid
  Image edge_map;      // sigmoid(edge_logits), values in [0,1]
  int h = 0, w = 0;
};

// Overlapping patch embedding (3x3 conv, stride 2) with a depthwise 3x3
// positional branch added elementwise, then tanh.
Tensor positional_patch_embed(const Tensor& input, const Tensor& w, const Tensor& b,
                              const Tensor& dw, const Tensor& dwb);

// Three-scale pyramid with self-attention at the coarsest level and a
// two-path edge head over the two finest scales.
class EdgeExtractor {
 public:
  EdgeExtractor(ParamRegistry& reg, PyramidDims dims = {});

  FeaturePyramid extract(const Image& image, AttentionRecorder* recorder = nullptr,
                         const std::string& tag_prefix = "") const;

  const PyramidDims& dims() const { return dims_; }

 private:
  PyramidDims dims_;
  // stem + three embed stages
  Tensor *stem_w_, *stem_b_;
  Tensor *ppe_w_[3], *ppe_b_[3], *ppe_dw_[3], *ppe_dwb_[3];
  // coarse self-attention
  Tensor *wq_, *wk_, *wv_, *wo_;
  // upsample-and-refine path
  Tensor *up2_proj_w_, *up2_proj_b_, *up2_ref_w_, *up2_ref_b_;
  Tensor *up1_proj_w_, *up1_proj_b_, *up1_ref_w_, *up1_ref_b_;
  // edge head: top-down and bottom-up conv stacks plus fusion
  Tensor *td1_w_, *td1_b_, *td2_w_, *td2_b_;
  Tensor *bu1_w_, *bu1_b_, *bu2_w_, *bu2_b_;
  Tensor *fuse_w_, *fuse_b_;
};

// Classical Canny: Gaussian smoothing, Sobel gradients, non-maximum
// suppression, hysteresis. Thresholds are fractions of the max gradient
// magnitude. Returns a binary image.
Image canny_edges(const Image& image, double low_frac = 0.1, double high_frac = 0.2,
                  double sigma = 1.0);

// Per-pixel significance weights clip(|laplacian|/max, w_min, 1) with the
// 4-neighbour kernel; a constant image yields w_min everywhere.
Image laplacian_weights(const Image& image, double w_min = 0.05);

}  // namespace tp3m

#include "tp3m/edgefeat.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>

namespace tp3m {

Tensor positional_patch_embed(const Tensor& input, const Tensor& w, const Tensor& b,
                              const Tensor& dw, const Tensor& dwb) {
  if (input.shape.size() != 3) throw std::runtime_error("positional_patch_embed: need {C,H,W}");
  if (input.shape[1] < 3 || input.shape[2] < 3)
    throw std::runtime_error("positional_patch_embed: input smaller than patch kernel");
  Tensor patches = conv2d(input, w, &b, 2, 1);
  Tensor pos = conv2d_depthwise(patches, dw, &dwb, 1, 1);
  return tanh_t(add(patches, pos));
}

EdgeExtractor::EdgeExtractor(ParamRegistry& reg, PyramidDims dims) : dims_(dims) {
  const int d1 = dims.d1, d2 = dims.d2, d3 = dims.d3;
  stem_w_ = &reg.create("edge.stem.w", {d1, 1, 3, 3}, 9);
  stem_b_ = &reg.create_zeros("edge.stem.b", {d1});

  const int in_ch[3] = {1, d1, d2};
  const int out_ch[3] = {d1, d2, d3};
  for (int i = 0; i < 3; ++i) {
    const std::string p = "edge.ppe" + std::to_string(i + 1);
    ppe_w_[i] = &reg.create(p + ".w", {out_ch[i], in_ch[i], 3, 3}, in_ch[i] * 9);
    ppe_b_[i] = &reg.create_zeros(p + ".b", {out_ch[i]});
    ppe_dw_[i] = &reg.create(p + ".dw", {out_ch[i], 3, 3}, 9);
    ppe_dwb_[i] = &reg.create_zeros(p + ".dwb", {out_ch[i]});
  }

  wq_ = &reg.create("edge.attn.wq", {d3, d3}, d3);
  wk_ = &reg.create("edge.attn.wk", {d3, d3}, d3);
  wv_ = &reg.create("edge.attn.wv", {d3, d3}, d3);
  wo_ = &reg.create("edge.attn.wo", {d3, d3}, d3);

  up2_proj_w_ = &reg.create("edge.up2.proj.w", {d2, d3, 1, 1}, d3);
  up2_proj_b_ = &reg.create_zeros("edge.up2.proj.b", {d2});
  up2_ref_w_ = &reg.create("edge.up2.refine.w", {d2, d2, 3, 3}, d2 * 9);
  up2_ref_b_ = &reg.create_zeros("edge.up2.refine.b", {d2});
  up1_proj_w_ = &reg.create("edge.up1.proj.w", {d1, d2, 1, 1}, d2);
  up1_proj_b_ = &reg.create_zeros("edge.up1.proj.b", {d1});
  up1_ref_w_ = &reg.create("edge.up1.refine.w", {d1, d1, 3, 3}, d1 * 9);
  up1_ref_b_ = &reg.create_zeros("edge.up1.refine.b", {d1});

  const int eh = 8;  // edge head width
  td1_w_ = &reg.create("edge.bimla.td1.w", {eh, d2, 3, 3}, d2 * 9);
  td1_b_ = &reg.create_zeros("edge.bimla.td1.b", {eh});
  td2_w_ = &reg.create("edge.bimla.td2.w", {eh, eh, 3, 3}, eh * 9);
  td2_b_ = &reg.create_zeros("edge.bimla.td2.b", {eh});
  bu1_w_ = &reg.create("edge.bimla.bu1.w", {eh, d1, 3, 3}, d1 * 9);
  bu1_b_ = &reg.create_zeros("edge.bimla.bu1.b", {eh});
  bu2_w_ = &reg.create("edge.bimla.bu2.w", {eh, eh, 3, 3}, eh * 9);
  bu2_b_ = &reg.create_zeros("edge.bimla.bu2.b", {eh});
  fuse_w_ = &reg.create("edge.bimla.fuse.w", {1, eh, 3, 3}, eh * 9);
  fuse_b_ = &reg.create_zeros("edge.bimla.fuse.b", {1});
}

FeaturePyramid EdgeExtractor::extract(const Image& image, AttentionRecorder* recorder,
                                      const std::string& tag_prefix) const {
  if (image.h % 8 != 0 || image.w % 8 != 0)
    throw std::runtime_error("extract: image dims must be divisible by 8");
  FeaturePyramid pyr;
  pyr.h = image.h;
  pyr.w = image.w;

  Tensor x = image_to_tensor(image);
  Tensor s0 = tanh_t(conv2d(x, *stem_w_, stem_b_, 1, 1));
  Tensor e1 = positional_patch_embed(x, *ppe_w_[0], *ppe_b_[0], *ppe_dw_[0], *ppe_dwb_[0]);
  Tensor e2 = positional_patch_embed(e1, *ppe_w_[1], *ppe_b_[1], *ppe_dw_[1], *ppe_dwb_[1]);
  Tensor e3 = positional_patch_embed(e2, *ppe_w_[2], *ppe_b_[2], *ppe_dw_[2], *ppe_dwb_[2]);

  const int h8 = e3.shape[1], w8 = e3.shape[2];
  Tensor tok = tokens_from_chw(e3);
  Tensor q = matmul(tok, *wq_);
  Tensor k = matmul(tok, *wk_);
  Tensor v = matmul(tok, *wv_);
  std::vector<double> weights;
  Tensor att = attention(q, k, v, recorder ? &weights : nullptr);
  if (recorder) {
    recorder->add(tag_prefix + "self_l3", tok.shape[0], tok.shape[0], std::move(weights));
  }
  Tensor f3tok = add(tok, matmul(att, *wo_));
  pyr.f3 = chw_from_tokens(f3tok, h8, w8);

  Tensor u2 = conv2d(upsample_nearest(pyr.f3, 2), *up2_proj_w_, up2_proj_b_, 1, 0);
  pyr.f2 = tanh_t(conv2d(add(u2, e2), *up2_ref_w_, up2_ref_b_, 1, 1));
  Tensor u1 = conv2d(upsample_nearest(pyr.f2, 4), *up1_proj_w_, up1_proj_b_, 1, 0);
  pyr.f1 = tanh_t(conv2d(add(u1, s0), *up1_ref_w_, up1_ref_b_, 1, 1));

  // Edge head over the two finest scales: top-down from f2, bottom-up from f1.
  Tensor tdq = tanh_t(conv2d(pyr.f2, *td1_w_, td1_b_, 1, 1));
  Tensor td = tanh_t(conv2d(upsample_nearest(tdq, 4), *td2_w_, td2_b_, 1, 1));
  Tensor buq = tanh_t(conv2d(pyr.f1, *bu1_w_, bu1_b_, 1, 1));
  Tensor bu = tanh_t(conv2d(buq, *bu2_w_, bu2_b_, 1, 1));
  pyr.edge_logits = conv2d(add(td, bu), *fuse_w_, fuse_b_, 1, 1);

  pyr.edge_map = Image(image.h, image.w);
  const double* lp = pyr.edge_logits.ptr();
  for (std::size_t i = 0; i < pyr.edge_map.v.size(); ++i) {
    const double z = lp[i];
    pyr.edge_map.v[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return pyr;
}

namespace {

double at_clamped(const Image& img, int y, int x) {
  y = std::min(std::max(y, 0), img.h - 1);
  x = std::min(std::max(x, 0), img.w - 1);
  return img.at(y, x);
}

Image gaussian_blur(const Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& kv : kernel) kv /= norm;
  Image tmp(img.h, img.w), out(img.h, img.w);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * at_clamped(img, y, x + i);
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * at_clamped(tmp, y + i, x);
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace

Image canny_edges(const Image& image, double low_frac, double high_frac, double sigma) {
  if (low_frac < 0.0 || low_frac > high_frac)
    throw std::runtime_error("canny_edges: need 0 <= low <= high");
  const Image smooth = gaussian_blur(image, sigma);
  const int h = image.h, w = image.w;
  Image mag(h, w), dir(h, w);
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = at_clamped(smooth, y - 1, x + 1) + 2 * at_clamped(smooth, y, x + 1) +
                        at_clamped(smooth, y + 1, x + 1) - at_clamped(smooth, y - 1, x - 1) -
                        2 * at_clamped(smooth, y, x - 1) - at_clamped(smooth, y + 1, x - 1);
      const double gy = at_clamped(smooth, y + 1, x - 1) + 2 * at_clamped(smooth, y + 1, x) +
                        at_clamped(smooth, y + 1, x + 1) - at_clamped(smooth, y - 1, x - 1) -
                        2 * at_clamped(smooth, y - 1, x) - at_clamped(smooth, y - 1, x + 1);
      mag.at(y, x) = std::hypot(gx, gy);
      dir.at(y, x) = std::atan2(gy, gx);
      max_mag = std::max(max_mag, mag.at(y, x));
    }
  }
  Image edges(h, w, 0.0);
  if (max_mag < 1e-12) return edges;

  // Non-maximum suppression with directions quantized to 4 bins; the outer
  // ring is excluded.
  Image nms(h, w, 0.0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double m = mag.at(y, x);
      double angle = dir.at(y, x) * 180.0 / M_PI;
      if (angle < 0) angle += 180.0;
      double n1, n2;
      if (angle < 22.5 || angle >= 157.5) {
        n1 = mag.at(y, x - 1);
        n2 = mag.at(y, x + 1);
      } else if (angle < 67.5) {
        n1 = mag.at(y - 1, x - 1);
        n2 = mag.at(y + 1, x + 1);
      } else if (angle < 112.5) {
        n1 = mag.at(y - 1, x);
        n2 = mag.at(y + 1, x);
      } else {
        n1 = mag.at(y - 1, x + 1);
        n2 = mag.at(y + 1, x - 1);
      }
      if (m >= n1 && m > n2) nms.at(y, x) = m;
    }
  }

  const double high = high_frac * max_mag;
  const double low = low_frac * max_mag;
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (nms.at(y, x) >= high) {
        edges.at(y, x) = 1.0;
        queue.emplace_back(y, x);
      }
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
        if (edges.at(ny, nx) == 0.0 && nms.at(ny, nx) >= low) {
          edges.at(ny, nx) = 1.0;
          queue.emplace_back(ny, nx);
        }
      }
    }
  }
  return edges;
}

Image laplacian_weights(const Image& image, double w_min) {
  const int h = image.h, w = image.w;
  Image lap(h, w);
  double max_abs = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = at_clamped(image, y - 1, x) + at_clamped(image, y + 1, x) +
                       at_clamped(image, y, x - 1) + at_clamped(image, y, x + 1) -
                       4.0 * image.at(y, x);
      lap.at(y, x) = std::abs(v);
      max_abs = std::max(max_abs, lap.at(y, x));
    }
  }
  Image out(h, w, w_min);
  if (max_abs < 1e-12) return out;
  for (std::size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = std::min(1.0, std::max(w_min, lap.v[i] / max_abs));
  }
  return out;
}

}  // namespace tp3m

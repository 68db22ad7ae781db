#pragma once

#include <string>
#include <vector>

#include "tp3m/tensor.hpp"

namespace tp3m {

// Grayscale image, values in [0,1], row-major.
struct Image {
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Image() = default;
  Image(int height, int width, double fill = 0.0)
      : h(height), w(width), v(static_cast<std::size_t>(height) * width, fill) {}

  double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
  bool inside(double x, double y) const { return x >= 0.0 && y >= 0.0 && x <= w - 1 && y <= h - 1; }
};

// Binary PGM (P5, maxval 255). Save quantizes round(v*255); comment lines are
// written after the magic.
void save_pgm(const Image& img, const std::string& path,
              const std::vector<std::string>& comments = {});
Image load_pgm(const std::string& path);

// Bilinear sample; caller guarantees inside(). Exact at integer coordinates.
double bilinear(const Image& img, double x, double y);

// {1,H,W} constant tensor view of an image.
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t);

// Little-endian float32 dump, row-major (depth map format).
void save_f32(const std::vector<double>& values, const std::string& path);
std::vector<double> load_f32(const std::string& path);

}  // namespace tp3m

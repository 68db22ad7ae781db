#include "tp3m/image.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace tp3m {

void save_pgm(const Image& img, const std::string& path,
              const std::vector<std::string>& comments) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_pgm: cannot open " + path);
  os << "P5\n";
  for (const auto& c : comments) os << "# " << c << "\n";
  os << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> bytes(img.v.size());
  for (std::size_t i = 0; i < img.v.size(); ++i) {
    const double q = std::floor(img.v[i] * 255.0 + 0.5);
    bytes[i] = static_cast<unsigned char>(std::min(255.0, std::max(0.0, q)));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("save_pgm: write failed " + path);
}

Image load_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_pgm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5") throw std::runtime_error("load_pgm: not a binary PGM: " + path);
  auto next_token = [&is, &path]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error("load_pgm: truncated header: " + path);
  };
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (maxval != 255) throw std::runtime_error("load_pgm: only maxval 255 supported");
  is.get();  // single whitespace after maxval
  Image img(h, w);
  std::vector<unsigned char> bytes(img.v.size());
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!is) throw std::runtime_error("load_pgm: truncated data: " + path);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.v[i] = bytes[i] / 255.0;
  return img;
}

double bilinear(const Image& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.w - 1);
  const int y1 = std::min(y0 + 1, img.h - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = (1.0 - fx) * img.at(y0, x0) + fx * img.at(y0, x1);
  const double bot = (1.0 - fx) * img.at(y1, x0) + fx * img.at(y1, x1);
  return (1.0 - fy) * top + fy * bot;
}

Tensor image_to_tensor(const Image& img) {
  return Tensor::from(img.v, {1, img.h, img.w});
}

Image tensor_to_image(const Tensor& t) {
  if (t.shape.size() != 3 || t.shape[0] != 1)
    throw std::runtime_error("tensor_to_image: need {1,H,W}");
  Image img(t.shape[1], t.shape[2]);
  img.v = *t.data;
  return img;
}

void save_f32(const std::vector<double>& values, const std::string& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_f32: cannot open " + path);
  std::vector<float> f(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) f[i] = static_cast<float>(values[i]);
  os.write(reinterpret_cast<const char*>(f.data()),
           static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!os) throw std::runtime_error("save_f32: write failed " + path);
}

std::vector<double> load_f32(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("load_f32: cannot open " + path);
  const auto size = static_cast<std::size_t>(is.tellg());
  if (size % sizeof(float) != 0) throw std::runtime_error("load_f32: bad size: " + path);
  is.seekg(0);
  std::vector<float> f(size / sizeof(float));
  is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(size));
  if (!is) throw std::runtime_error("load_f32: read failed: " + path);
  return std::vector<double>(f.begin(), f.end());
}

}  // namespace tp3m

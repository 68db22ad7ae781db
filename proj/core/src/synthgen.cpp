#include "tp3m/synthgen.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "tp3m/rng.hpp"

namespace fs = std::filesystem;

namespace tp3m {

namespace {

constexpr double kSceneDepth = 4.0;  // base plane / heightfield distance, meters

Mat3 make_intrinsics(int size) {
  Mat3 k = Mat3::Identity();
  k(0, 0) = k(1, 1) = static_cast<double>(size);
  k(0, 2) = k(1, 2) = (size - 1) / 2.0;
  return k;
}

// Integer-lattice hash to [0,1).
double lattice_value(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  std::uint64_t h = seed;
  h ^= static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ull;
  h ^= static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4full;
  h ^= h >> 29;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 32;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 32;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx);
  const auto iy = static_cast<std::int64_t>(fy);
  const double tx = smoothstep(x - fx);
  const double ty = smoothstep(y - fy);
  const double v00 = lattice_value(ix, iy, seed);
  const double v10 = lattice_value(ix + 1, iy, seed);
  const double v01 = lattice_value(ix, iy + 1, seed);
  const double v11 = lattice_value(ix + 1, iy + 1, seed);
  return (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
}

struct TexShape {
  bool disk = false;
  double cx = 0, cy = 0, hx = 0, hy = 0, value = 0.5;
};

// Procedural texture over a continuous domain: multi-octave value noise plus
// hard-edged constant shapes (so scenes contain both low-texture regions and
// strong edges).
struct ProcTexture {
  std::uint64_t seed = 0;
  int octaves = 4;
  double base_wavelength = 1.0;
  std::vector<TexShape> shapes;

  // Shapes placed inside [x0,x1] x [y0,y1].
  void place_shapes(Rng& rng, int count, double x0, double x1, double y0, double y1) {
    const double span = std::min(x1 - x0, y1 - y0);
    for (int i = 0; i < count; ++i) {
      TexShape s;
      s.disk = rng.uniform() < 0.5;
      s.cx = rng.uniform(x0, x1);
      s.cy = rng.uniform(y0, y1);
      s.hx = rng.uniform(0.05, 0.16) * span;
      s.hy = s.disk ? s.hx : rng.uniform(0.05, 0.16) * span;
      s.value = rng.uniform(0.08, 0.92);
      shapes.push_back(s);
    }
  }

  double operator()(double x, double y) const {
    double v = 0.0;
    double amp = 0.55;
    double freq = 1.0 / base_wavelength;
    double norm = 0.0;
    for (int o = 0; o < octaves; ++o) {
      v += amp * value_noise(x * freq, y * freq, seed + static_cast<std::uint64_t>(o) * 7919u);
      norm += amp;
      amp *= 0.62;
      freq *= 2.0;
    }
    v = norm > 0.0 ? 0.15 + 0.7 * (v / norm) : 0.5;
    for (const auto& s : shapes) {
      const double dx = (x - s.cx) / s.hx;
      const double dy = (y - s.cy) / s.hy;
      const bool hit = s.disk ? (dx * dx + dy * dy <= 1.0)
                              : (std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0);
      if (hit) v = s.value;
    }
    return std::min(0.98, std::max(0.02, v));
  }
};

void apply_jitter(Image& img, const JitterRecord& rec, Rng& rng) {
  // identity jitter must be exact, not merely within rounding
  if (rec.gain != 1.0 || rec.offset != 0.0) {
    for (double& p : img.v) p = rec.gain * (p - 0.5) + 0.5 + rec.offset;
  }
  if (rec.noise_sigma > 0.0) {
    for (double& p : img.v) p += rng.normal(0.0, rec.noise_sigma);
  }
  for (double& p : img.v) p = std::min(1.0, std::max(0.0, p));
}

JitterRecord draw_jitter(Rng& rng, double brightness, double contrast, double sigma) {
  JitterRecord rec;
  rec.offset = brightness * rng.uniform(-1.0, 1.0);
  rec.gain = 1.0 + contrast * rng.uniform(-1.0, 1.0);
  rec.noise_sigma = sigma;
  return rec;
}

Pose draw_pose(Rng& rng, double rot_deg, double trans_frac, double scene_depth) {
  Pose p;
  if (rot_deg > 0.0) {
    // Mostly in-plane rotation with a mild out-of-plane tilt.
    Vec3 axis(rng.uniform(-0.35, 0.35), rng.uniform(-0.35, 0.35), 1.0);
    const double angle = rot_deg * rng.uniform(0.75, 1.0);
    p.R = rotation_deg(axis, angle);
  } else {
    rng.uniform();
    rng.uniform();
    rng.uniform();
  }
  if (trans_frac > 0.0) {
    Vec3 dir(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.3, 0.3));
    if (dir.norm() < 1e-9) dir = Vec3(1, 0, 0);
    p.t = dir.normalized() * (trans_frac * scene_depth * rng.uniform(0.75, 1.0));
  } else {
    for (int i = 0; i < 4; ++i) rng.uniform();
  }
  return p;
}

// Camera-depth of the plane n.X = d (A/world frame) seen from `view` at pixel.
double plane_depth(const Mat3& k, const Pose& view, const Vec3& n, double d, const Vec2& px) {
  const Vec3 ray = view.R.transpose() * (k.inverse() * Vec3(px.x(), px.y(), 1.0));
  const Vec3 orig = -view.R.transpose() * view.t;
  const double denom = n.dot(ray);
  if (std::abs(denom) < 1e-12) return 0.0;
  const double s = (d - n.dot(orig)) / denom;
  if (s <= 0.0) return 0.0;
  // ray has unit z in camera frame, so the parameter equals camera depth.
  return s;
}

}  // namespace

void PerturbationSpec::validate() const {
  if (rot_deg < 0 || trans_frac < 0 || brightness < 0 || contrast < 0 || noise_sigma < 0 ||
      texture_octaves < 1 || shape_count < 0) {
    throw std::runtime_error("PerturbationSpec: magnitudes must be nonnegative");
  }
  if (ref_scale < 0.0 || ref_scale >= 1.0) {
    throw std::runtime_error(
        "PerturbationSpec: reference perturbation must be strictly smaller than destination");
  }
}

Image warp_image(const Image& input, const Mat3& h) {
  if (std::abs(h.determinant()) < 1e-12) throw std::runtime_error("warp_image: singular H");
  const Mat3 hinv = h.inverse();
  Image out(input.h, input.w, 0.0);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      const Vec2 src = apply_homography(hinv, Vec2(x, y));
      if (input.inside(src.x(), src.y())) {
        out.at(y, x) = bilinear(input, src.x(), src.y());
      }
    }
  }
  return out;
}

SceneSample gen_planar(std::uint64_t seed, const PerturbationSpec& spec, int size) {
  spec.validate();
  if (size % 8 != 0) throw std::runtime_error("gen_planar: size must be divisible by 8");

  SceneSample s;
  s.planar = true;
  s.size = size;
  s.k = make_intrinsics(size);

  Rng tex_rng(Rng::derive(seed, "texture"));
  ProcTexture tex;
  tex.seed = Rng::derive(seed, "noise");
  tex.octaves = spec.texture_octaves;
  tex.base_wavelength = size / 4.0;
  tex.place_shapes(tex_rng, spec.shape_count, 0, size - 1, 0, size - 1);

  s.a = Image(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) s.a.at(y, x) = tex(x, y);

  const Vec3 plane_n(0, 0, 1);
  Rng pose_rng(Rng::derive(seed, "pose"));
  s.pose_b = draw_pose(pose_rng, spec.rot_deg, spec.trans_frac, kSceneDepth);
  s.pose_c = draw_pose(pose_rng, spec.rot_deg * spec.ref_scale, spec.trans_frac * spec.ref_scale,
                       kSceneDepth);

  s.h_ab = plane_homography(s.k, s.pose_b, plane_n, kSceneDepth);
  if (std::abs(s.h_ab.determinant()) < 1e-9)
    throw std::runtime_error("gen_planar: degenerate homography");
  s.has_homography = true;
  const Mat3 h_ac = plane_homography(s.k, s.pose_c, plane_n, kSceneDepth);

  s.b = warp_image(s.a, s.h_ab);
  s.c = warp_image(s.a, h_ac);

  Rng jit_b(Rng::derive(seed, "jitter_b"));
  Rng jit_c(Rng::derive(seed, "jitter_c"));
  s.jitter_b = draw_jitter(jit_b, spec.brightness, spec.contrast, spec.noise_sigma);
  s.jitter_c = draw_jitter(jit_c, spec.brightness * spec.ref_scale,
                           spec.contrast * spec.ref_scale, spec.noise_sigma * spec.ref_scale);
  apply_jitter(s.b, s.jitter_b, jit_b);
  apply_jitter(s.c, s.jitter_c, jit_c);

  s.depth_a = Image(size, size, kSceneDepth);
  s.depth_b = Image(size, size);
  s.depth_c = Image(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      s.depth_b.at(y, x) = plane_depth(s.k, s.pose_b, plane_n, kSceneDepth, Vec2(x, y));
      s.depth_c.at(y, x) = plane_depth(s.k, s.pose_c, plane_n, kSceneDepth, Vec2(x, y));
    }
  }

  auto make_gt = [&](const Mat3& h, const Pose& view) {
    std::vector<std::array<double, 4>> gt;
    for (int y = 0; y < size; y += s.grid_step) {
      for (int x = 0; x < size; x += s.grid_step) {
        const Vec2 dst = apply_homography(h, Vec2(x, y));
        if (!s.b.inside(dst.x(), dst.y())) continue;
        // Consistency gate: H and the pose/depth route must agree.
        const Vec3 world = unproject(s.k, Vec2(x, y), kSceneDepth);
        const Vec3 cam = view.R * world + view.t;
        if (cam.z() <= 0.0) continue;
        const Vec2 reproj = project(s.k, cam);
        if ((reproj - dst).norm() > 0.5) continue;
        gt.push_back({static_cast<double>(x), static_cast<double>(y), dst.x(), dst.y()});
      }
    }
    return gt;
  };
  s.gt_ab = make_gt(s.h_ab, s.pose_b);
  s.gt_ac = make_gt(h_ac, s.pose_c);

  const int grid_count = (size / s.grid_step) * (size / s.grid_step);
  if (static_cast<int>(s.gt_ab.size()) * 10 < grid_count * 3) {
    throw SynthRegenerate("gen_planar: insufficient covisibility");
  }
  return s;
}

SceneSample gen_3d(std::uint64_t seed, const PerturbationSpec& spec, int size) {
  spec.validate();
  if (size % 8 != 0) throw std::runtime_error("gen_3d: size must be divisible by 8");

  SceneSample s;
  s.planar = false;
  s.size = size;
  s.k = make_intrinsics(size);

  // World = camera-A frame; the surface is a heightfield z = h(x,y) around
  // kSceneDepth with step discontinuities for occlusion.
  const double half_extent = kSceneDepth * (size / 2.0) / s.k(0, 0);  // visible half width
  const double domain = half_extent * 2.2;

  struct StepEdge {
    double dx, dy, c, height;
  };
  std::vector<StepEdge> steps;
  Rng hf_rng(Rng::derive(seed, "heightfield"));
  const int n_steps = 2;
  for (int i = 0; i < n_steps; ++i) {
    const double ang = hf_rng.uniform(0.0, 2.0 * M_PI);
    steps.push_back({std::cos(ang), std::sin(ang), hf_rng.uniform(-0.5, 0.5) * half_extent,
                     hf_rng.uniform(0.25, 0.45)});
  }
  const std::uint64_t hseed = Rng::derive(seed, "heightnoise");
  const double amp = 0.35;
  auto height = [&](double x, double y) {
    double z = kSceneDepth;
    z += amp * (2.0 * value_noise(x / (half_extent * 0.9), y / (half_extent * 0.9), hseed) - 1.0);
    for (const auto& st : steps) {
      if (x * st.dx + y * st.dy > st.c) z -= st.height;
    }
    return z;
  };

  Rng tex_rng(Rng::derive(seed, "texture"));
  ProcTexture tex;
  tex.seed = Rng::derive(seed, "noise");
  tex.octaves = spec.texture_octaves;
  tex.base_wavelength = half_extent * 0.55;
  tex.place_shapes(tex_rng, spec.shape_count, -domain, domain, -domain, domain);

  Rng pose_rng(Rng::derive(seed, "pose"));
  s.pose_b = draw_pose(pose_rng, spec.rot_deg, spec.trans_frac, kSceneDepth);
  s.pose_c = draw_pose(pose_rng, spec.rot_deg * spec.ref_scale, spec.trans_frac * spec.ref_scale,
                       kSceneDepth);

  const bool pure_rotation = s.pose_b.t.norm() < 1e-12;
  s.essential_degenerate = pure_rotation;
  if (pure_rotation) {
    // Depth drops out of the mapping, so the pair stays homography-evaluable.
    s.has_homography = true;
    s.h_ab = s.k * s.pose_b.R * s.k.inverse();
    s.h_ab /= s.h_ab(2, 2);
  }

  auto render = [&](const Pose& view, Image& img, Image& depth) {
    img = Image(size, size);
    depth = Image(size, size);
    const Mat3 kinv = s.k.inverse();
    const Mat3 rt = view.R.transpose();
    const Vec3 orig = -rt * view.t;
    const double s_lo = kSceneDepth * 0.4;
    const double s_hi = kSceneDepth * 1.8;
    const int n_march = 96;
    const double ds = (s_hi - s_lo) / n_march;
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const Vec3 ray = rt * (kinv * Vec3(x, y, 1.0));
        auto f = [&](double t) {
          const Vec3 p = orig + t * ray;
          return p.z() - height(p.x(), p.y());
        };
        double t_prev = s_lo;
        double f_prev = f(t_prev);
        double hit = -1.0;
        for (int i = 1; i <= n_march; ++i) {
          const double t_cur = s_lo + ds * i;
          const double f_cur = f(t_cur);
          if (f_prev < 0.0 && f_cur >= 0.0) {
            double lo = t_prev, hi = t_cur;
            for (int it = 0; it < 50; ++it) {
              const double mid = 0.5 * (lo + hi);
              if (f(mid) < 0.0)
                lo = mid;
              else
                hi = mid;
            }
            hit = 0.5 * (lo + hi);
            break;
          }
          t_prev = t_cur;
          f_prev = f_cur;
        }
        if (hit < 0.0) continue;  // left as invalid (value 0, depth 0)
        const Vec3 p = orig + hit * ray;
        img.at(y, x) = tex(p.x(), p.y());
        // ray has unit camera-frame z, so the parameter is the camera depth
        depth.at(y, x) = hit;
      }
    }
  };

  render(s.pose_a, s.a, s.depth_a);
  render(s.pose_b, s.b, s.depth_b);
  render(s.pose_c, s.c, s.depth_c);

  Rng jit_b(Rng::derive(seed, "jitter_b"));
  Rng jit_c(Rng::derive(seed, "jitter_c"));
  s.jitter_b = draw_jitter(jit_b, spec.brightness, spec.contrast, spec.noise_sigma);
  s.jitter_c = draw_jitter(jit_c, spec.brightness * spec.ref_scale,
                           spec.contrast * spec.ref_scale, spec.noise_sigma * spec.ref_scale);
  apply_jitter(s.b, s.jitter_b, jit_b);
  apply_jitter(s.c, s.jitter_c, jit_c);

  // Grid ground truth, kept only when the reverse reprojection through the
  // target view's depth comes back within 0.5 px (rejects occlusions).
  auto make_gt = [&](const Pose& view, const Image& depth_v) {
    std::vector<std::array<double, 4>> gt;
    for (int y = 0; y < size; y += s.grid_step) {
      for (int x = 0; x < size; x += s.grid_step) {
        const double za = s.depth_a.at(y, x);
        if (za <= 0.0) continue;
        const Vec3 world = unproject(s.k, Vec2(x, y), za);
        const Vec3 cam = view.R * world + view.t;
        if (cam.z() <= 0.0) continue;
        const Vec2 dst = project(s.k, cam);
        if (!depth_v.inside(dst.x(), dst.y())) continue;
        const int xi = static_cast<int>(std::floor(dst.x()));
        const int yi = static_cast<int>(std::floor(dst.y()));
        bool valid = true;
        for (int oy = 0; oy <= 1 && valid; ++oy)
          for (int ox = 0; ox <= 1 && valid; ++ox)
            if (depth_v.at(std::min(yi + oy, size - 1), std::min(xi + ox, size - 1)) <= 0.0)
              valid = false;
        if (!valid) continue;
        const double zv = bilinear(depth_v, dst.x(), dst.y());
        const Vec3 world_back = view.R.transpose() * (unproject(s.k, dst, zv) - view.t);
        if (world_back.z() <= 0.0) continue;
        const Vec2 back = project(s.k, world_back);
        if ((back - Vec2(x, y)).norm() > 0.5) continue;
        gt.push_back({static_cast<double>(x), static_cast<double>(y), dst.x(), dst.y()});
      }
    }
    return gt;
  };
  s.gt_ab = make_gt(s.pose_b, s.depth_b);
  s.gt_ac = make_gt(s.pose_c, s.depth_c);

  const int grid_count = (size / s.grid_step) * (size / s.grid_step);
  if (static_cast<int>(s.gt_ab.size()) * 10 < grid_count * 3) {
    throw SynthRegenerate("gen_3d: insufficient covisibility");
  }
  return s;
}

namespace {

nlohmann::json pose_to_json(const Pose& p) {
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i * 3 + j] = p.R(i, j);
  return {{"R", r}, {"t", {p.t.x(), p.t.y(), p.t.z()}}};
}

Pose pose_from_json(const nlohmann::json& j) {
  Pose p;
  const auto r = j.at("R").get<std::vector<double>>();
  for (int i = 0; i < 3; ++i)
    for (int jj = 0; jj < 3; ++jj) p.R(i, jj) = r[i * 3 + jj];
  const auto t = j.at("t").get<std::vector<double>>();
  p.t = Vec3(t[0], t[1], t[2]);
  return p;
}

void write_gt_tsv(const std::string& path, const std::vector<std::array<double, 4>>& gt) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_gt_tsv: cannot open " + path);
  char buf[128];
  for (const auto& m : gt) {
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t%.6f\t%.6f\n", m[0], m[1], m[2], m[3]);
    os << buf;
  }
}

std::vector<std::array<double, 4>> read_gt_tsv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_gt_tsv: cannot open " + path);
  std::vector<std::array<double, 4>> gt;
  std::array<double, 4> m{};
  while (is >> m[0] >> m[1] >> m[2] >> m[3]) gt.push_back(m);
  return gt;
}

}  // namespace

void write_sample(const std::string& dir, const SceneSample& s) {
  fs::create_directories(dir);
  save_pgm(s.a, dir + "/a.pgm");
  save_pgm(s.b, dir + "/b.pgm");
  save_pgm(s.c, dir + "/c.pgm");
  save_f32(s.depth_a.v, dir + "/depth_a.bin");
  save_f32(s.depth_b.v, dir + "/depth_b.bin");
  save_f32(s.depth_c.v, dir + "/depth_c.bin");
  write_gt_tsv(dir + "/gt_ab.tsv", s.gt_ab);
  write_gt_tsv(dir + "/gt_ac.tsv", s.gt_ac);

  nlohmann::json meta;
  meta["id"] = s.id;
  meta["mode"] = s.planar ? "planar" : "3d";
  meta["size"] = s.size;
  meta["grid_step"] = s.grid_step;
  std::vector<double> kv(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) kv[i * 3 + j] = s.k(i, j);
  meta["K"] = kv;
  meta["pose_a"] = pose_to_json(s.pose_a);
  meta["pose_b"] = pose_to_json(s.pose_b);
  meta["pose_c"] = pose_to_json(s.pose_c);
  meta["essential_degenerate"] = s.essential_degenerate;
  if (s.has_homography) {
    std::vector<double> hv(9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) hv[i * 3 + j] = s.h_ab(i, j);
    meta["homography"] = hv;
  }
  meta["jitter_b"] = {{"offset", s.jitter_b.offset},
                      {"gain", s.jitter_b.gain},
                      {"noise_sigma", s.jitter_b.noise_sigma}};
  meta["jitter_c"] = {{"offset", s.jitter_c.offset},
                      {"gain", s.jitter_c.gain},
                      {"noise_sigma", s.jitter_c.noise_sigma}};

  std::ofstream os(dir + "/meta.json", std::ios::trunc);
  if (!os) throw std::runtime_error("write_sample: cannot open meta.json in " + dir);
  os << meta.dump(2) << "\n";
}

SceneSample read_sample(const std::string& dir) {
  SceneSample s;
  std::ifstream is(dir + "/meta.json");
  if (!is) throw std::runtime_error("read_sample: cannot open " + dir + "/meta.json");
  nlohmann::json meta;
  is >> meta;

  s.id = meta.at("id").get<std::string>();
  s.planar = meta.at("mode").get<std::string>() == "planar";
  s.size = meta.at("size").get<int>();
  s.grid_step = meta.at("grid_step").get<int>();
  const auto kv = meta.at("K").get<std::vector<double>>();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s.k(i, j) = kv[i * 3 + j];
  s.pose_a = pose_from_json(meta.at("pose_a"));
  s.pose_b = pose_from_json(meta.at("pose_b"));
  s.pose_c = pose_from_json(meta.at("pose_c"));
  s.essential_degenerate = meta.at("essential_degenerate").get<bool>();
  if (meta.contains("homography")) {
    s.has_homography = true;
    const auto hv = meta.at("homography").get<std::vector<double>>();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.h_ab(i, j) = hv[i * 3 + j];
  }
  s.jitter_b = {meta.at("jitter_b").at("offset").get<double>(),
                meta.at("jitter_b").at("gain").get<double>(),
                meta.at("jitter_b").at("noise_sigma").get<double>()};
  s.jitter_c = {meta.at("jitter_c").at("offset").get<double>(),
                meta.at("jitter_c").at("gain").get<double>(),
                meta.at("jitter_c").at("noise_sigma").get<double>()};

  s.a = load_pgm(dir + "/a.pgm");
  s.b = load_pgm(dir + "/b.pgm");
  s.c = load_pgm(dir + "/c.pgm");
  auto load_depth = [&](const std::string& name) {
    Image d(s.size, s.size);
    d.v = load_f32(dir + "/" + name);
    if (static_cast<int>(d.v.size()) != s.size * s.size)
      throw std::runtime_error("read_sample: depth size mismatch in " + dir);
    return d;
  };
  s.depth_a = load_depth("depth_a.bin");
  s.depth_b = load_depth("depth_b.bin");
  s.depth_c = load_depth("depth_c.bin");
  s.gt_ab = read_gt_tsv(dir + "/gt_ab.tsv");
  s.gt_ac = read_gt_tsv(dir + "/gt_ac.tsv");
  return s;
}

}  // namespace tp3m

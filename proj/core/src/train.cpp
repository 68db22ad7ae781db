#include "tp3m/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "tp3m/rng.hpp"

namespace tp3m {

namespace {

// Max-pool an image down to a token grid (significance of the strongest
// pixel in each cell).
std::vector<double> max_pool_grid(const Image& img, int grid_h, int grid_w) {
  const int ch = img.h / grid_h, cw = img.w / grid_w;
  std::vector<double> out(static_cast<std::size_t>(grid_h) * grid_w, 0.0);
  for (int r = 0; r < grid_h; ++r)
    for (int c = 0; c < grid_w; ++c) {
      double mx = 0.0;
      for (int y = r * ch; y < (r + 1) * ch; ++y)
        for (int x = c * cw; x < (c + 1) * cw; ++x) mx = std::max(mx, img.at(y, x));
      out[static_cast<std::size_t>(r) * grid_w + c] = mx;
    }
  return out;
}

struct WarpOracle {
  const SceneSample& s;
  bool use_h;
  Mat3 h, h_inv;
  Pose a_to_b, b_to_a;

  explicit WarpOracle(const SceneSample& sample)
      : s(sample), use_h(sample.has_homography), h(sample.h_ab) {
    if (use_h) h_inv = h.inverse();
    a_to_b = relative_pose(s.pose_a, s.pose_b);
    b_to_a = relative_pose(s.pose_b, s.pose_a);
  }

  std::optional<Vec2> forward(const Vec2& p) const {
    if (use_h) return apply_homography(h, p);
    const int x = static_cast<int>(std::lround(p.x()));
    const int y = static_cast<int>(std::lround(p.y()));
    const double z = s.depth_a.at(std::min(y, s.size - 1), std::min(x, s.size - 1));
    if (z <= 0.0) return std::nullopt;
    const Vec3 cam = a_to_b.R * unproject(s.k, p, z) + a_to_b.t;
    if (cam.z() <= 0.0) return std::nullopt;
    return project(s.k, cam);
  }

  std::optional<Vec2> backward(const Vec2& p) const {
    if (use_h) return apply_homography(h_inv, p);
    const int x = static_cast<int>(std::lround(p.x()));
    const int y = static_cast<int>(std::lround(p.y()));
    const double z = s.depth_b.at(std::min(y, s.size - 1), std::min(x, s.size - 1));
    if (z <= 0.0) return std::nullopt;
    const Vec3 cam = b_to_a.R * unproject(s.k, p, z) + b_to_a.t;
    if (cam.z() <= 0.0) return std::nullopt;
    return project(s.k, cam);
  }
};

}  // namespace

GroundTruth build_ground_truth(const SceneSample& sample, const PyramidDims& dims,
                               const TrainSettings& ts) {
  (void)dims;
  GroundTruth gt;
  const Image canny_a = canny_edges(sample.a, ts.canny_low, ts.canny_high, ts.canny_sigma);
  const Image weights_a = laplacian_weights(sample.a, ts.w_min);
  const Image weights_b = laplacian_weights(sample.b, ts.w_min);
  const WarpOracle oracle(sample);

  const int size = sample.size;
  for (int stride : {8, 4}) {
    const int grid = size / stride;
    const double half = stride / 2;
    const auto edge_a = max_pool_grid(canny_a, grid, grid);
    const auto wa = max_pool_grid(weights_a, grid, grid);
    const auto wb = max_pool_grid(weights_b, grid, grid);

    auto nearest_token = [grid, stride, half](const Vec2& q) -> int {
      const int c = static_cast<int>(std::lround((q.x() - half) / stride));
      const int r = static_cast<int>(std::lround((q.y() - half) / stride));
      if (c < 0 || c >= grid || r < 0 || r >= grid) return -1;
      return r * grid + c;
    };

    // forward nearest token per A token, backward per B token, keep mutual
    std::vector<int> fwd(static_cast<std::size_t>(grid) * grid, -1);
    std::vector<Vec2> fwd_pos(static_cast<std::size_t>(grid) * grid);
    std::vector<int> bwd(static_cast<std::size_t>(grid) * grid, -1);
    for (int r = 0; r < grid; ++r) {
      for (int c = 0; c < grid; ++c) {
        const int i = r * grid + c;
        const Vec2 center(c * stride + half, r * stride + half);
        if (auto q = oracle.forward(center)) {
          fwd[i] = nearest_token(*q);
          fwd_pos[i] = *q;
        }
        if (auto q = oracle.backward(center)) bwd[i] = nearest_token(*q);
      }
    }
    std::vector<GtPair>& pairs = stride == 8 ? gt.l3 : gt.l2;
    for (int i = 0; i < grid * grid; ++i) {
      const int j = fwd[i];
      if (j < 0 || bwd[j] != i) continue;
      if (edge_a[i] < 0.5) continue;  // supervise edges only
      const double w = 0.5 * (wa[i] + wb[j]);
      pairs.push_back({i, j, w});
      if (stride == 8) {
        // 3D ground truth: the source token needs a known 3D point
        const int cx = (i % grid) * stride + stride / 2;
        const int cy = (i / grid) * stride + stride / 2;
        if (sample.depth_a.at(cy, cx) <= 0.0) continue;
        Gt3D g;
        g.a_idx = i;
        g.b_idx = j;
        g.jx = (fwd_pos[i].x() - half) / stride;
        g.jy = (fwd_pos[i].y() - half) / stride;
        g.w = w;
        gt.m3d.push_back(g);
      }
    }
  }
  return gt;
}

Tensor weighted_nll(const Tensor& p, const std::vector<GtPair>& pairs) {
  if (pairs.empty()) throw std::runtime_error("weighted_nll: empty ground truth");
  std::vector<std::pair<int, int>> cells;
  std::vector<double> w;
  cells.reserve(pairs.size());
  for (const auto& g : pairs) {
    cells.emplace_back(g.a_idx, g.b_idx);
    w.push_back(g.w);
  }
  Tensor probs = gather_cells(p, cells);
  Tensor weighted = mul(log_t(probs), Tensor::from(std::move(w), {static_cast<int>(w.size())}));
  return scale(sum(weighted), -1.0 / static_cast<double>(pairs.size()));
}

Tensor loss_2d2d(const Tensor& p, const std::vector<GtPair>& pairs) {
  return weighted_nll(p, pairs);
}

Tensor loss_2d3d(const Tensor& p, const std::vector<Gt3D>& pairs) {
  std::vector<GtPair> flat;
  flat.reserve(pairs.size());
  for (const auto& g : pairs) flat.push_back({g.a_idx, g.b_idx, g.w});
  return weighted_nll(p, flat);
}

Loss3DResult loss_3d(const Tensor& p, const std::vector<Gt3D>& pairs, double theta_loss,
                     double delta0, int grid_w) {
  Loss3DResult res;
  res.value = Tensor::scalar(0.0);
  if (pairs.empty()) return res;
  const int rows = p.shape[0], cols = p.shape[1];
  const int grid_h = cols / grid_w;
  const double* pd = p.ptr();
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& g : pairs) {
    if (g.a_idx < 0 || g.a_idx >= rows) throw std::runtime_error("loss_3d: bad index");
    const double* row = pd + static_cast<std::size_t>(g.a_idx) * cols;
    int best = 0;
    for (int j = 1; j < cols; ++j)
      if (row[j] > row[best]) best = j;
    const double max_p = row[best];
    if (max_p <= theta_loss) {
      ++res.skipped;
      continue;
    }
    // soft position over the 3x3 neighbourhood of the argmax
    const int br = best / grid_w, bc = best % grid_w;
    std::vector<std::pair<int, int>> cells;
    std::vector<double> xs, ys;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int r = br + dy, c = bc + dx;
        if (r < 0 || r >= grid_h || c < 0 || c >= grid_w) continue;
        cells.emplace_back(g.a_idx, r * grid_w + c);
        xs.push_back(c);
        ys.push_back(r);
      }
    }
    Tensor probs = gather_cells(p, cells);
    Tensor norm = sum(probs);
    Tensor wn = div_scalar_t(probs, norm);
    const int k = static_cast<int>(xs.size());
    Tensor jx = sum(mul(wn, Tensor::from(std::move(xs), {k})));
    Tensor jy = sum(mul(wn, Tensor::from(std::move(ys), {k})));
    Tensor dx = add_scalar(jx, -g.jx);
    Tensor dy_ = add_scalar(jy, -g.jy);
    Tensor dist = sqrt_t(add(mul(dx, dx), mul(dy_, dy_)));
    // 1/delta(i) = max_j P(i,j) / delta0, differentiable through P
    Tensor row_max = gather_cells(p, {{g.a_idx, best}});
    acc = add(acc, scale(mul(dist, row_max), g.w / delta0));
  }
  res.value = scale(acc, 1.0 / static_cast<double>(pairs.size()));
  return res;
}

Trainer::Trainer(Model& model, TrainSettings settings) : model_(model), ts_(settings) {}

namespace {

struct CachedSample {
  SceneSample scene;
  GroundTruth gt;
  FeaturePyramid pyr_a, pyr_b, pyr_c;
  Tensor a3, b3, a2, b2;  // detached token matrices
};

Tensor detach_tokens(const Tensor& chw) {
  Tensor tok = tokens_from_chw(chw);
  return Tensor::from(*tok.data, tok.shape);
}

double scalar_of(const Tensor& t) { return (*t.data)[0]; }

}  // namespace

std::vector<LossReport> Trainer::run(const std::vector<SceneSample>& samples, int epochs,
                                     std::uint64_t seed, const std::string& loss_curve_path,
                                     const std::string& ckpt_path,
                                     const std::string& resume_path,
                                     const std::vector<std::string>& curve_header) {
  if (samples.empty()) throw std::runtime_error("train: dataset is empty");

  ParamRegistry& reg = model_.reg;
  std::vector<Tensor*> edge_params = reg.select("edge.");
  std::vector<Tensor*> joint_params;
  for (Tensor* t : reg.select("")) {
    bool is_edge = false;
    for (Tensor* e : edge_params)
      if (e == t) is_edge = true;
    if (!is_edge) joint_params.push_back(t);
  }

  AdamConfig edge_cfg{ts_.lr_edge, ts_.beta1, ts_.beta2, ts_.eps};
  AdamConfig joint_cfg{ts_.lr_joint, ts_.beta1, ts_.beta2, ts_.eps};
  Adam adam_edge(edge_params, edge_cfg);
  Adam adam_joint(joint_params, joint_cfg);

  std::int64_t edge_done = 0, joint_done = 0;
  if (!resume_path.empty()) {
    auto leftover = model_.load(resume_path);
    adam_edge.restore(leftover, "adam.edge.");
    adam_joint.restore(leftover, "adam.joint.");
    for (const auto& r : leftover) {
      if (r.name == "train.edge_step") edge_done = static_cast<std::int64_t>(r.values.at(0));
      if (r.name == "train.joint_step") joint_done = static_cast<std::int64_t>(r.values.at(0));
    }
  }

  auto save_state = [&]() {
    std::vector<CheckpointRecord> extra = adam_edge.snapshot("adam.edge.");
    auto joint_snap = adam_joint.snapshot("adam.joint.");
    extra.insert(extra.end(), joint_snap.begin(), joint_snap.end());
    extra.push_back({"train.edge_step", {1}, {static_cast<double>(edge_done)}});
    extra.push_back({"train.joint_step", {1}, {static_cast<double>(joint_done)}});
    model_.save(ckpt_path, extra);
  };

  const int n = static_cast<int>(samples.size());
  const int steps_per_epoch = (n + ts_.batch - 1) / ts_.batch;
  const std::int64_t joint_total = ts_.joint_steps_override > 0
                                       ? ts_.joint_steps_override
                                       : static_cast<std::int64_t>(epochs) * steps_per_epoch;

  std::vector<LossReport> history;
  if (epochs == 0 && ts_.joint_steps_override == 0) {
    save_state();
    std::ofstream os(loss_curve_path, std::ios::trunc);
    for (const auto& line : curve_header) os << "# " << line << "\n";
    return history;
  }

  // ---- phase 1: edge head against Canny targets ----
  std::vector<const Image*> pool;
  std::vector<Image> canny_pool;
  for (const auto& s : samples) {
    pool.push_back(&s.a);
    pool.push_back(&s.b);
    pool.push_back(&s.c);
  }
  for (const Image* img : pool)
    canny_pool.push_back(canny_edges(*img, ts_.canny_low, ts_.canny_high, ts_.canny_sigma));

  const int pool_n = static_cast<int>(pool.size());
  auto edge_order = [&](std::int64_t pass) {
    std::vector<int> idx(pool_n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng r(Rng::derive(seed, "edge_order_" + std::to_string(pass)));
    for (int i = pool_n - 1; i > 0; --i) std::swap(idx[i], idx[r.uniform_int(0, i)]);
    return idx;
  };
  while (edge_done < ts_.edge_steps) {
    const std::int64_t pass = edge_done / pool_n;
    const auto order = edge_order(pass);
    const int which = order[static_cast<int>(edge_done % pool_n)];
    reg.zero_grad();
    FeaturePyramid pyr = model_.extractor.extract(*pool[which]);
    Tensor target = image_to_tensor(canny_pool[which]);
    Tensor bce = mean(sub(softplus(pyr.edge_logits), mul(pyr.edge_logits, target)));
    if (!std::isfinite(scalar_of(bce)))
      throw std::runtime_error("train: non-finite edge loss at step " + std::to_string(edge_done));
    bce.backward();
    adam_edge.step();
    ++edge_done;
  }

  // ---- phase 2: joint matching losses over cached pyramids ----
  std::vector<CachedSample> cache;
  {
    NoGradGuard ng;
    for (const auto& s : samples) {
      CachedSample cs;
      cs.scene = s;
      cs.gt = build_ground_truth(s, model_.dims, ts_);
      cs.pyr_a = model_.extractor.extract(s.a);
      cs.pyr_b = model_.extractor.extract(s.b);
      cs.pyr_c = model_.extractor.extract(s.c);
      cs.a3 = detach_tokens(cs.pyr_a.f3);
      cs.b3 = detach_tokens(cs.pyr_b.f3);
      cs.a2 = detach_tokens(cs.pyr_a.f2);
      cs.b2 = detach_tokens(cs.pyr_b.f2);
      cache.push_back(std::move(cs));
    }
  }

  auto joint_order = [&](std::int64_t epoch) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng r(Rng::derive(seed, "joint_order_" + std::to_string(epoch)));
    for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[r.uniform_int(0, i)]);
    return idx;
  };

  std::vector<std::string> curve_lines;
  while (joint_done < joint_total) {
    const std::int64_t epoch = joint_done / steps_per_epoch;
    const int pos = static_cast<int>(joint_done % steps_per_epoch);
    const auto order = joint_order(epoch);

    reg.zero_grad();
    Tensor batch_total = Tensor::scalar(0.0);
    LossReport rep;
    int in_batch = 0;
    for (int bi = 0; bi < ts_.batch; ++bi) {
      const int si = pos * ts_.batch + bi;
      if (si >= n) break;
      CachedSample& cs = cache[order[si]];
      ++in_batch;

      const int grid = cs.pyr_a.f3.shape[1];
      Tensor p3 = model_.matcher2d.confidence_matrix(3, cs.a3, cs.b3, ts_.cascade.omega);
      Tensor p2 = model_.matcher2d.confidence_matrix(2, cs.a2, cs.b2, ts_.cascade.omega);
      Tensor l2d2d = add(loss_2d2d(p3, cs.gt.l3), loss_2d2d(p2, cs.gt.l2));

      // pseudo-3D branch: A<->C matches (inference mode) feed the position
      // features; the A<->B coarse matches act as guidance
      CascadeResult ac = model_.matcher2d.cascade_match(cs.pyr_a, cs.pyr_c, ts_.cascade);
      CascadeResult ab = model_.matcher2d.cascade_match(cs.pyr_a, cs.pyr_b, ts_.cascade);
      Tensor f3d;
      if (ac.set.status == MatchStatus::ok) {
        Tensor pos_feat = build_position_features(ac.set, grid, grid, cs.scene.size,
                                                  cs.scene.size);
        f3d = fuse(cs.a3, model_.pos_transform.apply(pos_feat));
      } else {
        f3d = cs.a3;  // fallback: pure 2D features
      }
      Tensor p23 = model_.matcher3d.p2d3d(f3d, cs.b3, ab.set.matches, grid, grid, cs.scene.size,
                                          cs.scene.size, ts_.cascade.omega, ts_.guide);
      Tensor l2d3d = loss_2d3d(p23, cs.gt.m3d);
      Loss3DResult l3d = loss_3d(p23, cs.gt.m3d, ts_.theta_loss, ts_.delta0, grid);

      Tensor sample_total = add(add(l2d2d, l2d3d), l3d.value);
      batch_total = add(batch_total, sample_total);
      rep.l2d2d += scalar_of(l2d2d);
      rep.l2d3d += scalar_of(l2d3d);
      rep.l3d += scalar_of(l3d.value);
      rep.l3d_skipped += l3d.skipped;
    }
    Tensor loss = scale(batch_total, 1.0 / in_batch);
    rep.l2d2d /= in_batch;
    rep.l2d3d /= in_batch;
    rep.l3d /= in_batch;
    rep.total = rep.l2d2d + rep.l2d3d + rep.l3d;
    if (!std::isfinite(rep.total))
      throw std::runtime_error("train: non-finite joint loss at step " +
                               std::to_string(joint_done));
    loss.backward();
    adam_joint.step();
    ++joint_done;
    history.push_back(rep);

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld\t%.9g\t%.9g\t%.9g\t%.9g",
                  static_cast<long long>(joint_done), rep.total, rep.l2d2d, rep.l2d3d, rep.l3d);
    curve_lines.emplace_back(buf);
  }

  {
    const std::string tmp = loss_curve_path + ".tmp";
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw std::runtime_error("train: cannot open loss curve file " + loss_curve_path);
    for (const auto& line : curve_header) os << "# " << line << "\n";
    os << "# step\tL_total\tL_2d2d\tL_2d3d\tL_3d\n";
    for (const auto& line : curve_lines) os << line << "\n";
    os.close();
    std::filesystem::rename(tmp, loss_curve_path);
  }
  save_state();
  return history;
}

}  // namespace tp3m

#include "tp3m/geomeval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "tp3m/rng.hpp"

namespace tp3m {

namespace {

struct NormXform {
  Mat3 t = Mat3::Identity();
};

// Hartley normalization: centroid to origin, mean distance sqrt(2).
NormXform hartley(const std::vector<Vec2>& pts) {
  Vec2 mean = Vec2::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const auto& p : pts) dist += (p - mean).norm();
  dist /= static_cast<double>(pts.size());
  const double s = dist > 1e-12 ? std::sqrt(2.0) / dist : 1.0;
  NormXform n;
  n.t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return n;
}

Mat3 dlt_homography(const std::vector<Corr>& matches, const std::vector<int>& idx) {
  std::vector<Vec2> pa, pb;
  for (int i : idx) {
    pa.emplace_back(matches[i].xa, matches[i].ya);
    pb.emplace_back(matches[i].xb, matches[i].yb);
  }
  const NormXform na = hartley(pa), nb = hartley(pb);
  Eigen::MatrixXd a(2 * static_cast<int>(idx.size()), 9);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Vec3 p = na.t * Vec3(pa[r].x(), pa[r].y(), 1.0);
    const Vec3 q = nb.t * Vec3(pb[r].x(), pb[r].y(), 1.0);
    const double x = p.x() / p.z(), y = p.y() / p.z();
    const double u = q.x() / q.z(), v = q.y() / q.z();
    a.row(2 * r) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * r + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd hv = svd.matrixV().col(8);
  Mat3 hn;
  hn << hv(0), hv(1), hv(2), hv(3), hv(4), hv(5), hv(6), hv(7), hv(8);
  Mat3 h = nb.t.inverse() * hn * na.t;
  if (std::abs(h(2, 2)) < 1e-14) throw std::runtime_error("dlt: degenerate solution");
  return h / h(2, 2);
}

double transfer_error(const Mat3& h, const Corr& m) {
  const Vec3 q = h * Vec3(m.xa, m.ya, 1.0);
  if (std::abs(q.z()) < 1e-14) return 1e30;
  const double dx = q.x() / q.z() - m.xb;
  const double dy = q.y() / q.z() - m.yb;
  return std::sqrt(dx * dx + dy * dy);
}

bool collinear(const Corr& a, const Corr& b, const Corr& c, bool dst) {
  const double x1 = dst ? a.xb : a.xa, y1 = dst ? a.yb : a.ya;
  const double x2 = dst ? b.xb : b.xa, y2 = dst ? b.yb : b.ya;
  const double x3 = dst ? c.xb : c.xa, y3 = dst ? c.yb : c.ya;
  const double area = (x2 - x1) * (y3 - y1) - (y2 - y1) * (x3 - x1);
  return std::abs(area) < 1e-9;
}

bool degenerate_sample(const std::vector<Corr>& m, const std::vector<int>& idx) {
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (std::size_t j = i + 1; j < idx.size(); ++j)
      for (std::size_t k = j + 1; k < idx.size(); ++k) {
        if (collinear(m[idx[i]], m[idx[j]], m[idx[k]], false)) return true;
        if (collinear(m[idx[i]], m[idx[j]], m[idx[k]], true)) return true;
      }
  return false;
}

// canonical order so estimation is independent of input permutation
std::vector<int> canonical_order(const std::vector<Corr>& matches) {
  std::vector<int> order(matches.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Corr& ma = matches[a];
    const Corr& mb = matches[b];
    if (ma.xa != mb.xa) return ma.xa < mb.xa;
    if (ma.ya != mb.ya) return ma.ya < mb.ya;
    if (ma.xb != mb.xb) return ma.xb < mb.xb;
    return ma.yb < mb.yb;
  });
  return order;
}

int adaptive_iters(int inliers, int total, int sample_size, double confidence, int cap) {
  const double ratio = static_cast<double>(inliers) / total;
  const double p_good = std::pow(ratio, sample_size);
  if (p_good >= 1.0 - 1e-12) return 1;
  const double denom = std::log(1.0 - p_good);
  if (denom >= -1e-12) return cap;
  const double need = std::log(1.0 - confidence) / denom;
  return need >= cap ? cap : std::max(1, static_cast<int>(std::ceil(need)));
}

Mat3 eight_point(const std::vector<Corr>& matches, const std::vector<int>& idx) {
  std::vector<Vec2> pa, pb;
  for (int i : idx) {
    pa.emplace_back(matches[i].xa, matches[i].ya);
    pb.emplace_back(matches[i].xb, matches[i].yb);
  }
  const NormXform na = hartley(pa), nb = hartley(pb);
  Eigen::MatrixXd a(static_cast<int>(idx.size()), 9);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Vec3 p = na.t * Vec3(pa[r].x(), pa[r].y(), 1.0);
    const Vec3 q = nb.t * Vec3(pb[r].x(), pb[r].y(), 1.0);
    const double x = p.x(), y = p.y();
    const double u = q.x(), v = q.y();
    a.row(r) << u * x, u * y, u, v * x, v * y, v, x, y, 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd fv = svd.matrixV().col(8);
  Mat3 fn;
  fn << fv(0), fv(1), fv(2), fv(3), fv(4), fv(5), fv(6), fv(7), fv(8);
  // rank-2 enforcement
  Eigen::JacobiSVD<Mat3> fsvd(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = fsvd.singularValues();
  s(2) = 0.0;
  fn = fsvd.matrixU() * s.asDiagonal() * fsvd.matrixV().transpose();
  Mat3 f = nb.t.transpose() * fn * na.t;
  const double norm = f.norm();
  if (norm < 1e-14) throw std::runtime_error("eight_point: zero solution");
  f /= norm;
  // deterministic sign: largest |entry| positive
  int bi = 0, bj = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(f(i, j)) > std::abs(f(bi, bj))) {
        bi = i;
        bj = j;
      }
  if (f(bi, bj) < 0.0) f = -f;
  return f;
}

// symmetric epipolar distance: mean of the two point-to-line distances
double sym_epipolar(const Mat3& f, const Corr& m) {
  const Vec3 pa(m.xa, m.ya, 1.0);
  const Vec3 pb(m.xb, m.yb, 1.0);
  const Vec3 lb = f * pa;         // line in image b
  const Vec3 la = f.transpose() * pb;  // line in image a
  const double val = std::abs(pb.dot(lb));
  const double nb2 = lb.x() * lb.x() + lb.y() * lb.y();
  const double na2 = la.x() * la.x() + la.y() * la.y();
  if (nb2 < 1e-30 || na2 < 1e-30) return 1e30;
  return 0.5 * (val / std::sqrt(nb2) + val / std::sqrt(na2));
}

}  // namespace

HomographyEstimate estimate_homography(const std::vector<Corr>& matches,
                                       const RansacConfig& cfg) {
  if (matches.size() < 4) throw std::runtime_error("estimate_homography: need >= 4 matches");
  const auto order = canonical_order(matches);
  std::vector<Corr> sorted;
  for (int i : order) sorted.push_back(matches[i]);
  const int n = static_cast<int>(sorted.size());

  Rng rng(Rng::derive(cfg.seed, "ransac_h"));
  int best_count = -1;
  std::vector<char> best_mask(n, 0);
  int iters_needed = cfg.max_iters;
  int degenerate_count = 0;
  int attempted = 0;
  for (int it = 0; it < iters_needed && it < cfg.max_iters; ++it) {
    std::vector<int> idx;
    while (idx.size() < 4) {
      const int cand = rng.uniform_int(0, n - 1);
      if (std::find(idx.begin(), idx.end(), cand) == idx.end()) idx.push_back(cand);
    }
    ++attempted;
    if (degenerate_sample(sorted, idx)) {
      ++degenerate_count;
      continue;
    }
    Mat3 h;
    try {
      h = dlt_homography(sorted, idx);
    } catch (const std::exception&) {
      ++degenerate_count;
      continue;
    }
    int count = 0;
    std::vector<char> mask(n, 0);
    for (int i = 0; i < n; ++i) {
      if (transfer_error(h, sorted[i]) < cfg.inlier_thresh) {
        mask[i] = 1;
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
      iters_needed = adaptive_iters(count, n, 4, cfg.confidence, cfg.max_iters);
    }
  }
  if (best_count < 4) {
    if (degenerate_count == attempted)
      throw std::runtime_error("estimate_homography: all minimal samples degenerate");
    throw std::runtime_error("estimate_homography: no model with 4 inliers found");
  }

  // least-squares refit over the inliers
  std::vector<int> inlier_idx;
  for (int i = 0; i < n; ++i)
    if (best_mask[i]) inlier_idx.push_back(i);
  Mat3 h = dlt_homography(sorted, inlier_idx);

  HomographyEstimate est;
  est.h = h;
  est.inliers.assign(matches.size(), 0);
  for (int i = 0; i < n; ++i) {
    if (transfer_error(h, sorted[i]) < cfg.inlier_thresh) {
      est.inliers[order[i]] = 1;
      ++est.inlier_count;
    }
  }
  return est;
}

FundamentalEstimate estimate_fundamental(const std::vector<Corr>& matches,
                                         const RansacConfig& cfg) {
  if (matches.size() < 8) throw std::runtime_error("estimate_fundamental: need >= 8 matches");
  const auto order = canonical_order(matches);
  std::vector<Corr> sorted;
  for (int i : order) sorted.push_back(matches[i]);
  const int n = static_cast<int>(sorted.size());

  Rng rng(Rng::derive(cfg.seed, "ransac_f"));
  int best_count = -1;
  std::vector<char> best_mask(n, 0);
  int iters_needed = cfg.max_iters;
  for (int it = 0; it < iters_needed && it < cfg.max_iters; ++it) {
    std::vector<int> idx;
    while (idx.size() < 8) {
      const int cand = rng.uniform_int(0, n - 1);
      if (std::find(idx.begin(), idx.end(), cand) == idx.end()) idx.push_back(cand);
    }
    Mat3 f;
    try {
      f = eight_point(sorted, idx);
    } catch (const std::exception&) {
      continue;
    }
    int count = 0;
    std::vector<char> mask(n, 0);
    for (int i = 0; i < n; ++i) {
      if (sym_epipolar(f, sorted[i]) < cfg.inlier_thresh) {
        mask[i] = 1;
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
      iters_needed = adaptive_iters(count, n, 8, cfg.confidence, cfg.max_iters);
    }
  }
  if (best_count < 8) throw std::runtime_error("estimate_fundamental: no model found");

  std::vector<int> inlier_idx;
  for (int i = 0; i < n; ++i)
    if (best_mask[i]) inlier_idx.push_back(i);
  Mat3 f = eight_point(sorted, inlier_idx);

  FundamentalEstimate est;
  est.f = f;
  est.inliers.assign(matches.size(), 0);
  for (int i = 0; i < n; ++i) {
    if (sym_epipolar(f, sorted[i]) < cfg.inlier_thresh) {
      est.inliers[order[i]] = 1;
      ++est.inlier_count;
    }
  }
  return est;
}

namespace {

Vec3 triangulate_linear(const Mat3& r, const Vec3& t, const Vec2& xa, const Vec2& xb) {
  // P1 = [I | 0], P2 = [R | t] on normalized coordinates
  Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero();
  p1.block<3, 3>(0, 0) = Mat3::Identity();
  Eigen::Matrix<double, 3, 4> p2;
  p2.block<3, 3>(0, 0) = r;
  p2.col(3) = t;
  Eigen::Matrix4d design;
  design.row(0) = xa.x() * p1.row(2) - p1.row(0);
  design.row(1) = xa.y() * p1.row(2) - p1.row(1);
  design.row(2) = xb.x() * p2.row(2) - p2.row(0);
  design.row(3) = xb.y() * p2.row(2) - p2.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(design, Eigen::ComputeFullV);
  const Eigen::Vector4d xh = svd.matrixV().col(3);
  return xh.head<3>() / xh(3);
}

}  // namespace

Pose pose_from_fundamental(const Mat3& f, const Mat3& k, const std::vector<Corr>& matches) {
  if (matches.empty()) throw std::runtime_error("pose_from_fundamental: no matches");
  Mat3 e = k.transpose() * f * k;
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0) u.col(2) *= -1;
  if (v.determinant() < 0) v.col(2) *= -1;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 r1 = u * w * v.transpose();
  const Mat3 r2 = u * w.transpose() * v.transpose();
  const Vec3 tu = u.col(2);

  const Mat3 kinv = k.inverse();
  std::vector<std::pair<Vec2, Vec2>> norm_pts;
  for (const auto& m : matches) {
    const Vec3 pa = kinv * Vec3(m.xa, m.ya, 1.0);
    const Vec3 pb = kinv * Vec3(m.xb, m.yb, 1.0);
    norm_pts.push_back({{pa.x() / pa.z(), pa.y() / pa.z()}, {pb.x() / pb.z(), pb.y() / pb.z()}});
  }

  const Mat3 rs[4] = {r1, r1, r2, r2};
  const Vec3 ts[4] = {tu, -tu, tu, -tu};
  int counts[4] = {0, 0, 0, 0};
  for (int c = 0; c < 4; ++c) {
    for (const auto& [xa, xb] : norm_pts) {
      const Vec3 x = triangulate_linear(rs[c], ts[c], xa, xb);
      const double z1 = x.z();
      const double z2 = (rs[c] * x + ts[c]).z();
      if (z1 > 0 && z2 > 0) ++counts[c];
    }
  }
  int best = 0;
  for (int c = 1; c < 4; ++c)
    if (counts[c] > counts[best]) best = c;
  const int total = static_cast<int>(norm_pts.size());
  int runners = 0;
  for (int c = 0; c < 4; ++c)
    if (c != best && counts[c] == counts[best]) ++runners;
  if (counts[best] * 2 <= total || runners > 0)
    throw std::runtime_error("pose_from_fundamental: cheirality tie");

  Pose pose;
  pose.R = rs[best];
  pose.t = ts[best].normalized();
  return pose;
}

double pose_error_deg(const Pose& est, const Pose& gt) {
  const double rot = rotation_angle_deg(est.R * gt.R.transpose());
  const double cos_t =
      std::min(1.0, std::max(-1.0, est.t.normalized().dot(gt.t.normalized())));
  double trans = std::acos(cos_t) * 180.0 / M_PI;
  trans = std::min(trans, 180.0 - trans);
  return std::max(rot, trans);
}

std::vector<double> auc(const std::vector<double>& errors,
                        const std::vector<double>& thresholds) {
  if (errors.empty()) throw std::runtime_error("auc: empty error list");
  std::vector<double> sorted = errors;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> out;
  const double n = static_cast<double>(sorted.size());
  for (double t : thresholds) {
    double area = 0.0;
    for (double e : sorted) {
      if (e > t) break;
      area += (t - e);
    }
    out.push_back(area / (n * t));
  }
  return out;
}

std::optional<double> epipolar_precision(const std::vector<Corr>& matches, const Mat3& f,
                                         double tau) {
  if (tau <= 0.0) throw std::runtime_error("epipolar_precision: tau must be positive");
  if (matches.empty()) return std::nullopt;
  int good = 0;
  for (const auto& m : matches)
    if (sym_epipolar(f, m) < tau) ++good;
  return static_cast<double>(good) / static_cast<double>(matches.size());
}

double homography_corner_error(const Mat3& h_est, const Mat3& h_gt, int w, int h) {
  const Vec2 corners[4] = {{0, 0}, {static_cast<double>(w - 1), 0},
                           {0, static_cast<double>(h - 1)},
                           {static_cast<double>(w - 1), static_cast<double>(h - 1)}};
  double err = 0.0;
  for (const auto& c : corners) {
    err += (apply_homography(h_est, c) - apply_homography(h_gt, c)).norm();
  }
  return err / 4.0;
}

Mat3 essential_from_pose(const Pose& rel) {
  Mat3 tx;
  tx << 0, -rel.t.z(), rel.t.y(), rel.t.z(), 0, -rel.t.x(), -rel.t.y(), rel.t.x(), 0;
  return tx * rel.R;
}

}  // namespace tp3m

#include "tp3m/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace tp3m {

Pose relative_pose(const Pose& a, const Pose& b) {
  Pose rel;
  rel.R = b.R * a.R.transpose();
  rel.t = b.t - rel.R * a.t;
  return rel;
}

Vec2 project(const Mat3& k, const Vec3& x_cam) {
  if (x_cam.z() <= 0.0) throw std::runtime_error("project: point behind camera");
  const Vec3 p = k * x_cam;
  return {p.x() / p.z(), p.y() / p.z()};
}

Vec3 unproject(const Mat3& k, const Vec2& px, double z) {
  const Vec3 ray = k.inverse() * Vec3(px.x(), px.y(), 1.0);
  return ray * z;
}

Mat3 plane_homography(const Mat3& k, const Pose& a_to_b, const Vec3& plane_n, double plane_d) {
  Mat3 h = k * (a_to_b.R + a_to_b.t * plane_n.transpose() / plane_d) * k.inverse();
  if (std::abs(h(2, 2)) < 1e-12) throw std::runtime_error("plane_homography: H(2,2) near zero");
  return h / h(2, 2);
}

Vec2 apply_homography(const Mat3& h, const Vec2& p) {
  const Vec3 q = h * Vec3(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) < 1e-15) throw std::runtime_error("apply_homography: point at infinity");
  return {q.x() / q.z(), q.y() / q.z()};
}

Mat3 rotation_deg(const Vec3& axis, double degrees) {
  const double rad = degrees * M_PI / 180.0;
  return Eigen::AngleAxisd(rad, axis.normalized()).toRotationMatrix();
}

double rotation_angle_deg(const Mat3& r) {
  const double c = std::min(1.0, std::max(-1.0, (r.trace() - 1.0) / 2.0));
  return std::acos(c) * 180.0 / M_PI;
}

}  // namespace tp3m

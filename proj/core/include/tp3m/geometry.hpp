#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tp3m {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// World-to-camera transform: x_cam = R * x_world + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

// Transform mapping camera-a coordinates to camera-b coordinates.
Pose relative_pose(const Pose& a, const Pose& b);

// Pinhole projection of a camera-frame point (z > 0).
Vec2 project(const Mat3& k, const Vec3& x_cam);
// Camera-frame point with camera depth z.
Vec3 unproject(const Mat3& k, const Vec2& px, double z);

// Homography induced by the plane n.X = d (expressed in camera-a frame):
// p_b ~ H p_a for points on the plane. Returned with H(2,2) = 1.
Mat3 plane_homography(const Mat3& k, const Pose& a_to_b, const Vec3& plane_n, double plane_d);

// Apply a homography to a pixel.
Vec2 apply_homography(const Mat3& h, const Vec2& p);

// Rotation from axis-angle (degrees).
Mat3 rotation_deg(const Vec3& axis, double degrees);

// Angle of a rotation matrix in degrees.
double rotation_angle_deg(const Mat3& r);

}  // namespace tp3m

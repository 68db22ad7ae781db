#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tp3m/geometry.hpp"

namespace tp3m {

struct Corr {
  double xa = 0, ya = 0, xb = 0, yb = 0;
};

struct RansacConfig {
  int max_iters = 2000;
  // pixels for homography, normalized epipolar units for fundamental
  double inlier_thresh = 3.0;
  double confidence = 0.999;
  std::uint64_t seed = 0;
};

struct HomographyEstimate {
  Mat3 h = Mat3::Identity();  // H(2,2) normalized to 1
  std::vector<char> inliers;  // aligned with the input order
  int inlier_count = 0;
};

struct FundamentalEstimate {
  Mat3 f = Mat3::Zero();  // rank 2, Frobenius norm 1
  std::vector<char> inliers;
  int inlier_count = 0;
};

// 4-point DLT in a RANSAC loop with a Hartley-normalized least-squares refit
// over the inliers. The matches are canonicalized internally, so the result
// does not depend on input order.
HomographyEstimate estimate_homography(const std::vector<Corr>& matches,
                                       const RansacConfig& cfg);

// Normalized 8-point with rank-2 enforcement; inliers by symmetric epipolar
// distance in the input coordinate units.
FundamentalEstimate estimate_fundamental(const std::vector<Corr>& matches,
                                         const RansacConfig& cfg);

// E = K^T F K, SVD decomposition into the four candidates, cheirality vote
// over triangulated matches. Throws when no candidate wins a majority.
Pose pose_from_fundamental(const Mat3& f, const Mat3& k, const std::vector<Corr>& matches);

// max(rotation angle, translation direction angle) in degrees; translation
// compared up to sign.
double pose_error_deg(const Pose& est, const Pose& gt);

// Exact area under the recall step-curve, normalized by the threshold.
// Failed estimates enter as +infinity.
std::vector<double> auc(const std::vector<double>& errors,
                        const std::vector<double>& thresholds);

// Fraction of matches with symmetric epipolar distance below tau; empty
// input is not-applicable.
std::optional<double> epipolar_precision(const std::vector<Corr>& matches, const Mat3& f,
                                         double tau);

// Mean distance of the four image corners mapped by the two homographies.
double homography_corner_error(const Mat3& h_est, const Mat3& h_gt, int w, int h);

// Essential matrix [t]x R of a relative pose.
Mat3 essential_from_pose(const Pose& rel);

}  // namespace tp3m

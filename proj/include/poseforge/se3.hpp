#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace poseforge {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Rotations maximally spread; the chordal mean matrix is singular and no
/// unique projection onto SO(3) exists.
struct DegenerateMean : std::runtime_error {
  DegenerateMean() : std::runtime_error("weighted_rotation_mean: mean matrix is singular") {}
};

inline Mat3 skew(const Vec3& v) {
  Mat3 s;
  s <<    0, -v.z(),  v.y(),
       v.z(),     0, -v.x(),
      -v.y(),  v.x(),     0;
  return s;
}

/// Axis-angle vector (angle = norm, radians) to rotation matrix.
/// Uses the first-order expansion I + [r]x below 1e-9 rad.
inline Mat3 rodrigues_to_matrix(const Vec3& r) {
  const double theta = r.norm();
  if (theta < 1e-9) {
    return Mat3::Identity() + skew(r);
  }
  const Vec3 u = r / theta;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return c * Mat3::Identity() + (1.0 - c) * (u * u.transpose()) + s * skew(u);
}

/// Inverse Rodrigues map, canonical with norm in [0, pi].
/// At theta = pi the axis sign is ambiguous; the convention here is that the
/// first nonzero component of the returned vector is positive.
inline Vec3 matrix_to_rodrigues(const Mat3& R) {
  Eigen::AngleAxisd aa(R);
  double angle = aa.angle();
  Vec3 axis = aa.axis();
  if (angle < 0) {  // Eigen keeps angle in [0, pi], but normalize anyway
    angle = -angle;
    axis = -axis;
  }
  if (angle > M_PI - 1e-9) {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(axis[i]) > 1e-12) {
        if (axis[i] < 0) axis = -axis;
        break;
      }
    }
  }
  return angle * axis;
}

/// Rigid body transform: x_out = rotation * x_in + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  RigidTransform() = default;
  RigidTransform(const Mat3& R, const Vec3& t) : rotation(R), translation(t) {}

  static RigidTransform Identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline RigidTransform invert(const RigidTransform& t) {
  Mat3 rt = t.rotation.transpose();
  return {rt, -(rt * t.translation)};
}

/// Angular distance arccos((tr(a^T b) - 1) / 2), clamped against fp drift.
inline double geodesic_angle(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// L2 chordal mean: argmin over SO(3) of sum_i w_i ||R - R_i||_F^2.
/// Computed as Rbar U D^{-1/2} U^T with Rbar the weighted sum and (U, D) the
/// eigendecomposition of Rbar^T Rbar.
inline Mat3 weighted_rotation_mean(const std::vector<Mat3>& rotations,
                                   const std::vector<double>& weights) {
  if (rotations.empty() || rotations.size() != weights.size()) {
    throw std::invalid_argument("weighted_rotation_mean: bad input sizes");
  }
  Mat3 rbar = Mat3::Zero();
  double wsum = 0;
  for (size_t i = 0; i < rotations.size(); ++i) {
    rbar += weights[i] * rotations[i];
    wsum += weights[i];
  }
  if (wsum <= 0) throw std::invalid_argument("weighted_rotation_mean: weight sum must be > 0");
  rbar /= wsum;
  if (rbar.determinant() < 1e-12) throw DegenerateMean();
  // Rbar U D^{-1/2} U^T is the polar factor of Rbar; the SVD evaluation of the
  // same quantity is better conditioned near degeneracy.
  Eigen::JacobiSVD<Mat3> svd(rbar, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues().minCoeff() < 1e-12) throw DegenerateMean();
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace poseforge

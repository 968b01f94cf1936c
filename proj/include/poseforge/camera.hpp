#pragma once

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <utility>
#include <vector>

#include "poseforge/se3.hpp"

namespace poseforge {

using Vec2 = Eigen::Vector2d;

struct BehindCamera : std::runtime_error {
  BehindCamera() : std::runtime_error("project: point has non-positive depth in camera frame") {}
};

/// Pinhole camera with Brown-Conrady distortion, coefficients (k1, k2, p1, p2, k3).
struct CameraModel {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  Eigen::Matrix<double, 5, 1> distortion = Eigen::Matrix<double, 5, 1>::Zero();
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("CameraModel: focal lengths must be > 0");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height) {
      throw std::invalid_argument("CameraModel: principal point outside image");
    }
  }
};

inline nlohmann::json to_json(const CameraModel& c) {
  return {{"schema_version", 1},
          {"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
          {"dist", {c.distortion[0], c.distortion[1], c.distortion[2], c.distortion[3], c.distortion[4]}},
          {"width", c.width}, {"height", c.height}};
}

inline CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  auto d = j.at("dist");
  if (d.size() != 5) throw std::invalid_argument("camera: dist must have 5 entries");
  for (int i = 0; i < 5; ++i) c.distortion[i] = d[i].get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.validate();
  return c;
}

/// Planar checkerboard; interior corners live at z = 0 in the board frame and
/// are mapped into the target frame by board_to_target.
struct BoardSpec {
  int squares_x = 0, squares_y = 0;
  double square_size = 0;  // meters
  RigidTransform board_to_target;

  int corner_count() const { return (squares_x - 1) * (squares_y - 1); }

  void validate() const {
    if (squares_x < 3 || squares_y < 3) throw std::invalid_argument("BoardSpec: need >= 3 squares per side");
    if (square_size <= 0) throw std::invalid_argument("BoardSpec: square_size must be > 0");
  }
};

struct FeatureObservation {
  int feature_id = 0;
  Vec2 pixel = Vec2::Zero();
};

/// Distort normalized coordinates (Brown-Conrady radial-tangential).
inline Vec2 distort_normalized(const Eigen::Matrix<double, 5, 1>& d, const Vec2& n) {
  const double x = n.x(), y = n.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + d[0] * r2 + d[1] * r2 * r2 + d[4] * r2 * r2 * r2;
  const double xd = x * radial + 2.0 * d[2] * x * y + d[3] * (r2 + 2.0 * x * x);
  const double yd = y * radial + d[2] * (r2 + 2.0 * y * y) + 2.0 * d[3] * x * y;
  return {xd, yd};
}

/// Invert the distortion by fixed-point iteration. Used only for DLT
/// initialization; accuracy far below a pixel is enough there.
inline Vec2 undistort_normalized(const Eigen::Matrix<double, 5, 1>& d, const Vec2& nd) {
  Vec2 n = nd;
  for (int it = 0; it < 20; ++it) {
    Vec2 delta = distort_normalized(d, n) - n;
    n = nd - delta;
  }
  return n;
}

/// Project a point given in the pose's source frame into pixels.
inline Vec2 project(const CameraModel& model, const RigidTransform& pose, const Vec3& point) {
  const Vec3 pc = pose.apply(point);
  if (pc.z() < 1e-6) throw BehindCamera();
  Vec2 n(pc.x() / pc.z(), pc.y() / pc.z());
  Vec2 nd = distort_normalized(model.distortion, n);
  return {model.fx * nd.x() + model.cx, model.fy * nd.y() + model.cy};
}

/// Interior corners in the target frame, row-major stable ids starting at 0.
inline std::vector<std::pair<int, Vec3>> board_corners_in_target(const BoardSpec& spec) {
  spec.validate();
  std::vector<std::pair<int, Vec3>> out;
  out.reserve(spec.corner_count());
  int id = 0;
  for (int row = 1; row < spec.squares_y; ++row) {
    for (int col = 1; col < spec.squares_x; ++col) {
      Vec3 p(col * spec.square_size, row * spec.square_size, 0.0);
      out.emplace_back(id++, spec.board_to_target.apply(p));
    }
  }
  return out;
}

}  // namespace poseforge

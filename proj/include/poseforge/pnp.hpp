#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "poseforge/camera.hpp"
#include "poseforge/lsq.hpp"
#include "poseforge/se3.hpp"

namespace poseforge {

struct InsufficientFeatures : std::runtime_error {
  explicit InsufficientFeatures(int sample_id)
      : std::runtime_error("solve_pnp: sample " + std::to_string(sample_id) +
                           " has fewer than 6 observations") {}
};

struct DegenerateConfiguration : std::runtime_error {
  explicit DegenerateConfiguration(int sample_id)
      : std::runtime_error("solve_pnp: degenerate (collinear) corner configuration in sample " +
                           std::to_string(sample_id)) {}
};

struct PnpSample {
  int sample_id = 0;
  std::vector<FeatureObservation> observations;
};

struct PnpResult {
  std::map<int, RigidTransform> poses;       // sample_id -> target-to-camera
  std::map<int, double> rms_per_sample;      // pixels
  std::optional<CameraModel> refined_camera;
};

namespace detail {

/// Homography-based DLT pose of the board plane in the camera frame.
/// Observations are undistorted and normalized first; corners enter with
/// their board-plane (x, y) coordinates.
inline RigidTransform dlt_board_pose(const CameraModel& camera, const BoardSpec& board,
                                     const PnpSample& sample) {
  const int m = static_cast<int>(sample.observations.size());
  MatX A(2 * m, 9);
  for (int i = 0; i < m; ++i) {
    const auto& obs = sample.observations[i];
    const int col = obs.feature_id % (board.squares_x - 1) + 1;
    const int row = obs.feature_id / (board.squares_x - 1) + 1;
    const double X = col * board.square_size;
    const double Y = row * board.square_size;
    Vec2 nd((obs.pixel.x() - camera.cx) / camera.fx, (obs.pixel.y() - camera.cy) / camera.fy);
    Vec2 n = undistort_normalized(camera.distortion, nd);
    A.row(2 * i)     << X, Y, 1, 0, 0, 0, -n.x() * X, -n.x() * Y, -n.x();
    A.row(2 * i + 1) << 0, 0, 0, X, Y, 1, -n.y() * X, -n.y() * Y, -n.y();
  }
  Eigen::JacobiSVD<MatX> svd(A, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[7] < 1e-9 * sv[0]) throw DegenerateConfiguration(sample.sample_id);
  Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 H;
  H << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];

  double lam = 2.0 / (H.col(0).norm() + H.col(1).norm());
  if (H(2, 2) < 0) lam = -lam;  // enforce positive depth of the board origin side
  Vec3 r1 = lam * H.col(0);
  Vec3 r2 = lam * H.col(1);
  Vec3 t = lam * H.col(2);
  Mat3 R;
  R.col(0) = r1;
  R.col(1) = r2;
  R.col(2) = r1.cross(r2);
  Eigen::JacobiSVD<Mat3> rsvd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 Ru = rsvd.matrixU() * rsvd.matrixV().transpose();
  if (Ru.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    Ru = rsvd.matrixU() * flip * rsvd.matrixV().transpose();
  }
  return {Ru, t};
}

inline VecX pose_to_params(const RigidTransform& t) {
  VecX p(6);
  p.head<3>() = matrix_to_rodrigues(t.rotation);
  p.tail<3>() = t.translation;
  return p;
}

inline RigidTransform params_to_pose(const Eigen::Ref<const VecX>& p) {
  return {rodrigues_to_matrix(p.head<3>()), p.tail<3>()};
}

inline CameraModel params_to_camera(const CameraModel& base, const Eigen::Ref<const VecX>& p) {
  CameraModel c = base;
  c.fx = p[0];
  c.fy = p[1];
  c.cx = p[2];
  c.cy = p[3];
  c.distortion = p.segment<5>(4);
  return c;
}

}  // namespace detail

inline double reprojection_rms(const CameraModel& camera, const BoardSpec& board,
                               const RigidTransform& pose, const PnpSample& sample) {
  auto corners = board_corners_in_target(board);
  double ss = 0;
  for (const auto& obs : sample.observations) {
    Vec2 pred = project(camera, pose, corners[obs.feature_id].second);
    ss += (pred - obs.pixel).squaredNorm();
  }
  return std::sqrt(ss / sample.observations.size());
}

/// Per-sample target-to-camera poses minimizing reprojection error, DLT init
/// then LM refinement. With refine_intrinsics the camera parameters are
/// re-estimated in a second joint pass over all samples.
inline PnpResult solve_pnp(const CameraModel& camera, const BoardSpec& board,
                           const std::vector<PnpSample>& samples,
                           bool refine_intrinsics = false) {
  camera.validate();
  board.validate();
  auto corners = board_corners_in_target(board);
  const RigidTransform target_to_board = invert(board.board_to_target);

  PnpResult result;
  for (const auto& sample : samples) {
    if (sample.observations.size() < 6) throw InsufficientFeatures(sample.sample_id);
    for (const auto& obs : sample.observations) {
      if (obs.feature_id < 0 || obs.feature_id >= board.corner_count()) {
        throw std::invalid_argument("solve_pnp: feature id out of range in sample " +
                                    std::to_string(sample.sample_id));
      }
    }
    RigidTransform board_in_cam = detail::dlt_board_pose(camera, board, sample);
    RigidTransform init = compose(board_in_cam, target_to_board);

    LsqProblem problem;
    problem.residual_fn = [&](const VecX& p) {
      RigidTransform pose = detail::params_to_pose(p);
      VecX r(2 * sample.observations.size());
      for (size_t j = 0; j < sample.observations.size(); ++j) {
        Vec2 pred = project(camera, pose, corners[sample.observations[j].feature_id].second);
        r.segment<2>(2 * j) = pred - sample.observations[j].pixel;
      }
      return r;
    };
    auto report = solve_lm(problem, detail::pose_to_params(init));
    RigidTransform pose = detail::params_to_pose(report.solution);
    result.poses[sample.sample_id] = pose;
    result.rms_per_sample[sample.sample_id] = reprojection_rms(camera, board, pose, sample);
  }

  if (refine_intrinsics) {
    // Joint pass: 6 params per sample followed by (fx, fy, cx, cy, d0..d4).
    std::vector<int> ids;
    size_t total_obs = 0;
    for (const auto& s : samples) {
      ids.push_back(s.sample_id);
      total_obs += s.observations.size();
    }
    const int n_pose = 6 * static_cast<int>(ids.size());
    VecX x0(n_pose + 9);
    for (size_t k = 0; k < ids.size(); ++k) {
      x0.segment<6>(6 * k) = detail::pose_to_params(result.poses[ids[k]]);
    }
    x0.segment<4>(n_pose) << camera.fx, camera.fy, camera.cx, camera.cy;
    x0.segment<5>(n_pose + 4) = camera.distortion;

    LsqProblem joint;
    joint.residual_fn = [&](const VecX& p) {
      CameraModel cam = detail::params_to_camera(camera, p.segment<9>(n_pose));
      VecX r(2 * total_obs);
      size_t off = 0;
      for (size_t k = 0; k < samples.size(); ++k) {
        RigidTransform pose = detail::params_to_pose(p.segment<6>(6 * k));
        for (const auto& obs : samples[k].observations) {
          Vec2 pred = project(cam, pose, corners[obs.feature_id].second);
          r.segment<2>(2 * off) = pred - obs.pixel;
          ++off;
        }
      }
      return r;
    };
    auto report = solve_lm(joint, x0);
    CameraModel refined = detail::params_to_camera(camera, report.solution.segment<9>(n_pose));
    result.refined_camera = refined;
    for (size_t k = 0; k < ids.size(); ++k) {
      RigidTransform pose = detail::params_to_pose(report.solution.segment<6>(6 * k));
      result.poses[ids[k]] = pose;
      result.rms_per_sample[ids[k]] = reprojection_rms(refined, board, pose, samples[k]);
    }
  }
  return result;
}

}  // namespace poseforge

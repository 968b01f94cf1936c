#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "poseforge/camera.hpp"
#include "poseforge/pnp.hpp"
#include "poseforge/se3.hpp"

namespace poseforge {

struct LengthMismatch : std::runtime_error {
  LengthMismatch() : std::runtime_error("metrics: estimated and truth lists differ in length") {}
};

struct ZeroRangeTruth : std::runtime_error {
  ZeroRangeTruth() : std::runtime_error("speed_score: truth translation norm below 1e-9 m") {}
};

struct PoseErrorReport {
  double e_t = 0;  // meters
  double e_r = 0;  // radians
  std::vector<double> per_sample_t;
  std::vector<double> per_sample_r;
};

inline PoseErrorReport pose_errors(const std::vector<RigidTransform>& estimated,
                                   const std::vector<RigidTransform>& truth) {
  if (estimated.size() != truth.size() || estimated.empty()) throw LengthMismatch();
  PoseErrorReport rep;
  rep.per_sample_t.reserve(estimated.size());
  rep.per_sample_r.reserve(estimated.size());
  for (size_t i = 0; i < estimated.size(); ++i) {
    rep.per_sample_t.push_back((estimated[i].translation - truth[i].translation).norm());
    rep.per_sample_r.push_back(geodesic_angle(estimated[i].rotation, truth[i].rotation));
  }
  for (double v : rep.per_sample_t) rep.e_t += v;
  for (double v : rep.per_sample_r) rep.e_r += v;
  rep.e_t /= estimated.size();
  rep.e_r /= estimated.size();
  return rep;
}

/// Mean over samples of the per-sample RMS pixel error (RMS inside, mean outside).
inline double reprojection_error(const CameraModel& camera, const BoardSpec& board,
                                 const std::vector<RigidTransform>& poses,
                                 const std::vector<PnpSample>& samples) {
  if (poses.size() != samples.size() || poses.empty()) throw LengthMismatch();
  double sum = 0;
  for (size_t i = 0; i < poses.size(); ++i) {
    sum += reprojection_rms(camera, board, poses[i], samples[i]);
  }
  return sum / poses.size();
}

/// Mean over samples of rotation error (radians) plus range-normalized
/// translation error.
inline double speed_score(const std::vector<RigidTransform>& estimated,
                          const std::vector<RigidTransform>& truth) {
  if (estimated.size() != truth.size() || estimated.empty()) throw LengthMismatch();
  double sum = 0;
  for (size_t i = 0; i < estimated.size(); ++i) {
    const double range = truth[i].translation.norm();
    if (range < 1e-9) throw ZeroRangeTruth();
    sum += geodesic_angle(estimated[i].rotation, truth[i].rotation) +
           (estimated[i].translation - truth[i].translation).norm() / range;
  }
  return sum / estimated.size();
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

/// Sample standard deviation; NaN for fewer than 2 entries (rendered as "n/a"
/// at the I/O boundary).
inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean(v);
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1));
}

}  // namespace poseforge

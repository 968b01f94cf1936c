#pragma once

#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "poseforge/lsq.hpp"
#include "poseforge/se3.hpp"

namespace poseforge {

enum class SourceTag { KUKA, VICON };

inline const char* source_name(SourceTag tag) { return tag == SourceTag::KUKA ? "KUKA" : "VICON"; }

/// One relative end-effector pose reported by a measurement source.
struct SourceMeasurement {
  int sample_id = 0;
  RigidTransform target_chain;  // target-EE expressed in camera-EE frame
  SourceTag source_tag = SourceTag::KUKA;
};

/// The two constant offsets solved per source: end-effector to true object frames.
struct OffsetPair {
  RigidTransform target_offset;  // T_{T_S T}
  RigidTransform camera_offset;  // T_{C_S C}
  double residual_rms = 0;       // Frobenius units per sample
};

struct DegenerateMotion : std::runtime_error {
  DegenerateMotion()
      : std::runtime_error("solve_rwhe: measurement rotations span fewer than 3 dimensions") {}
};

struct NoConvergence : std::runtime_error {
  explicit NoConvergence(double grad_norm)
      : std::runtime_error("solve_rwhe: solver stalled with gradient norm " +
                           std::to_string(grad_norm)) {}
};

/// Reconstructed camera-to-target pose from one chain measurement:
/// T_TC = camera_offset * target_chain * target_offset^-1.
inline RigidTransform reconstruct_pose(const OffsetPair& offsets,
                                       const SourceMeasurement& measurement) {
  return compose(offsets.camera_offset,
                 compose(measurement.target_chain, invert(offsets.target_offset)));
}

namespace detail {

inline VecX offsets_to_params(const OffsetPair& o) {
  VecX p(12);
  p.segment<3>(0) = matrix_to_rodrigues(o.camera_offset.rotation);
  p.segment<3>(3) = o.camera_offset.translation;
  RigidTransform w = invert(o.target_offset);
  p.segment<3>(6) = matrix_to_rodrigues(w.rotation);
  p.segment<3>(9) = w.translation;
  return p;
}

inline OffsetPair params_to_offsets(const VecX& p) {
  OffsetPair o;
  o.camera_offset = {rodrigues_to_matrix(p.segment<3>(0)), p.segment<3>(3)};
  RigidTransform w{rodrigues_to_matrix(p.segment<3>(6)), p.segment<3>(9)};
  o.target_offset = invert(w);
  return o;
}

inline Mat3 polar_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    R = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return R;
}

/// Data-driven initial guess for truth_i ~ A * meas_i * W. Relative motions
/// eliminate W: truth_i truth_j^T = Ra (meas_i meas_j^T) Ra^T, so Ra aligns
/// the conjugation axes (Procrustes over axis pairs). Rw then averages out of
/// the per-sample identities, and the translations solve linearly.
inline VecX initial_guess(const std::map<int, RigidTransform>& truth,
                          const std::vector<SourceMeasurement>& measurements) {
  const size_t n = measurements.size();
  Mat3 axis_acc = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const Mat3 dRt = truth.at(measurements[i].sample_id).rotation *
                       truth.at(measurements[j].sample_id).rotation.transpose();
      const Mat3 dRm = measurements[i].target_chain.rotation *
                       measurements[j].target_chain.rotation.transpose();
      Vec3 u = matrix_to_rodrigues(dRt);
      Vec3 v = matrix_to_rodrigues(dRm);
      const double angle = v.norm();
      if (angle < 1e-6 || angle > M_PI - 1e-3) continue;  // axis ill-defined
      axis_acc += (u / u.norm()) * (v / angle).transpose();
    }
  }
  Mat3 Ra = polar_rotation(axis_acc);
  Mat3 w_acc = Mat3::Zero();
  for (const auto& m : measurements) {
    w_acc += (Ra * m.target_chain.rotation).transpose() * truth.at(m.sample_id).rotation;
  }
  Mat3 Rw = polar_rotation(w_acc);
  // t_truth = Ra * (Rm * tw + tm) + ta, linear in (ta, tw)
  MatX A(3 * n, 6);
  VecX b(3 * n);
  for (size_t i = 0; i < n; ++i) {
    const auto& m = measurements[i];
    A.block<3, 3>(3 * i, 0) = Mat3::Identity();
    A.block<3, 3>(3 * i, 3) = Ra * m.target_chain.rotation;
    b.segment<3>(3 * i) =
        truth.at(m.sample_id).translation - Ra * m.target_chain.translation;
  }
  VecX tt = (A.transpose() * A).ldlt().solve(A.transpose() * b);

  VecX p(12);
  p.segment<3>(0) = matrix_to_rodrigues(Ra);
  p.segment<3>(3) = tt.head<3>();
  p.segment<3>(6) = matrix_to_rodrigues(Rw);
  p.segment<3>(9) = tt.tail<3>();
  return p;
}

}  // namespace detail

/// Solve the Robot/World Hand/Eye problem for one source: minimize the sum of
/// squared Frobenius distances between the calibrated poses and the chain
/// reconstructions, over 12 parameters (two rotation vectors, two translations).
inline OffsetPair solve_rwhe(const std::map<int, RigidTransform>& truth,
                             const std::vector<SourceMeasurement>& measurements,
                             const OffsetPair* init = nullptr,
                             double translation_weight = 1.0) {
  if (measurements.size() < 3) {
    throw std::invalid_argument("solve_rwhe: need at least 3 samples");
  }
  for (const auto& m : measurements) {
    if (!truth.count(m.sample_id)) {
      throw std::invalid_argument("solve_rwhe: no calibrated pose for sample " +
                                  std::to_string(m.sample_id));
    }
  }

  // Motion degeneracy: the measurement rotation vectors must span 3D.
  MatX rots(measurements.size(), 3);
  for (size_t i = 0; i < measurements.size(); ++i) {
    rots.row(i) = matrix_to_rodrigues(measurements[i].target_chain.rotation).transpose();
  }
  Eigen::JacobiSVD<MatX> msvd(rots);
  if (msvd.singularValues().size() < 3 || msvd.singularValues()[2] < 1e-6) {
    throw DegenerateMotion();
  }

  const size_t n = measurements.size();
  LsqProblem problem;
  problem.residual_fn = [&](const VecX& p) {
    RigidTransform A{rodrigues_to_matrix(p.segment<3>(0)), p.segment<3>(3)};
    RigidTransform W{rodrigues_to_matrix(p.segment<3>(6)), p.segment<3>(9)};
    VecX r(12 * n);
    for (size_t i = 0; i < n; ++i) {
      RigidTransform pred = compose(A, compose(measurements[i].target_chain, W));
      const RigidTransform& cal = truth.at(measurements[i].sample_id);
      Mat3 dR = pred.rotation - cal.rotation;
      r.segment<3>(12 * i + 0) = dR.row(0);
      r.segment<3>(12 * i + 3) = dR.row(1);
      r.segment<3>(12 * i + 6) = dR.row(2);
      r.segment<3>(12 * i + 9) = translation_weight * (pred.translation - cal.translation);
    }
    return r;
  };

  VecX x0 = init ? detail::offsets_to_params(*init) : detail::offsets_to_params(OffsetPair{});
  LsqOptions opts;
  auto report = solve_lm(problem, x0, opts);

  if (!init) {
    // the identity basin can be wrong for large offsets; also try a
    // data-driven Procrustes + linear-translation guess and keep the better
    auto alt = solve_lm(problem, detail::initial_guess(truth, measurements), opts);
    if (alt.final_cost < report.final_cost) report = alt;
  }

  auto gradient_norm = [&](const SolveReport& rep) {
    VecX r = problem.residual_fn(rep.solution);
    MatX J = finite_difference_jacobian(problem.residual_fn, rep.solution, r);
    return (J.transpose() * r).lpNorm<Eigen::Infinity>();
  };

  double gnorm = gradient_norm(report);
  if (gnorm > 1e-6) {
    // Restarts from random rotation-vector perturbations of the init.
    std::mt19937_64 rng(20240331);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int attempt = 0; attempt < 8 && gnorm > 1e-6; ++attempt) {
      VecX x = x0;
      for (int block : {0, 6}) {
        Vec3 dr(gauss(rng), gauss(rng), gauss(rng));
        if (dr.norm() > M_PI / 2) dr *= (M_PI / 2) / dr.norm();
        Mat3 R = rodrigues_to_matrix(x.segment<3>(block));
        x.segment<3>(block) = matrix_to_rodrigues(rodrigues_to_matrix(dr) * R);
      }
      auto retry = solve_lm(problem, x, opts);
      if (retry.final_cost < report.final_cost) {
        report = retry;
        gnorm = gradient_norm(report);
      }
    }
    if (gnorm > 1e-6 && report.termination_reason == TerminationReason::max_iter) {
      throw NoConvergence(gnorm);
    }
  }

  OffsetPair solved = detail::params_to_offsets(report.solution);
  // RMS over samples of the unweighted Frobenius residual.
  double ss = 0;
  for (const auto& m : measurements) {
    RigidTransform rec = reconstruct_pose(solved, m);
    const RigidTransform& cal = truth.at(m.sample_id);
    ss += (rec.matrix() - cal.matrix()).squaredNorm();
  }
  solved.residual_rms = std::sqrt(ss / n);
  return solved;
}

}  // namespace poseforge

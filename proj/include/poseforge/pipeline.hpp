#pragma once

#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "poseforge/fusion.hpp"
#include "poseforge/io.hpp"
#include "poseforge/metrics.hpp"
#include "poseforge/pnp.hpp"
#include "poseforge/rwhe.hpp"

namespace poseforge {

struct MissingProfile : std::runtime_error {
  explicit MissingProfile(const std::string& path)
      : std::runtime_error("profile not found: " + path) {}
};

struct CalibrationOptions {
  bool refine_intrinsics = false;
  double rejection_multiplier = 1.96;
};

struct SourceSummary {
  double e_t = 0, e_t_std = 0;  // m
  double e_r = 0, e_r_std = 0;  // rad
  double e_p = 0, e_p_std = 0;  // px
};

struct CalibrationResult {
  CalibrationProfile profile;
  SourceSummary kuka;
  std::optional<SourceSummary> vicon;
  std::optional<SourceSummary> fused;
  std::map<int, RigidTransform> calibrated_poses;  // T_TC,cal from PnP
  std::vector<std::string> warnings;
};

namespace detail {

inline SourceSummary summarize(const std::map<int, RigidTransform>& cal,
                               const std::map<int, RigidTransform>& recon,
                               const CameraModel& camera, const BoardSpec& board,
                               const std::map<int, PnpSample>& samples) {
  std::vector<double> et, er, ep;
  for (const auto& [id, rec] : recon) {
    const auto& truth = cal.at(id);
    et.push_back((rec.translation - truth.translation).norm());
    er.push_back(geodesic_angle(rec.rotation, truth.rotation));
    auto it = samples.find(id);
    if (it != samples.end() && !it->second.observations.empty()) {
      ep.push_back(reprojection_rms(camera, board, rec, it->second));
    }
  }
  SourceSummary s;
  s.e_t = mean(et);
  s.e_t_std = stddev(et);
  s.e_r = mean(er);
  s.e_r_std = stddev(er);
  s.e_p = mean(ep);
  s.e_p_std = stddev(ep);
  return s;
}

}  // namespace detail

/// Two-step calibration per source (PnP truth, then RWHE), variance
/// estimation, and the rejection-model fit. Vicon stages are skipped with a
/// warning when no record carries Vicon chains.
inline CalibrationResult calibrate(const std::vector<MeasurementRecord>& records,
                                   const CameraModel& camera, const BoardSpec& board,
                                   const CalibrationOptions& opts = {}) {
  std::vector<PnpSample> pnp_samples;
  for (const auto& rec : records) {
    if (!rec.observations.empty()) {
      pnp_samples.push_back({rec.sample_id, rec.observations});
    }
  }
  if (pnp_samples.empty()) {
    throw std::invalid_argument("calibrate: no records carry board observations");
  }

  PnpResult pnp = solve_pnp(camera, board, pnp_samples, opts.refine_intrinsics);
  const CameraModel& cam = pnp.refined_camera ? *pnp.refined_camera : camera;

  CalibrationResult result;
  result.calibrated_poses = pnp.poses;

  std::vector<SourceMeasurement> kuka_meas, vicon_meas;
  for (const auto& rec : records) {
    if (!pnp.poses.count(rec.sample_id)) continue;
    kuka_meas.push_back(rec.kuka_measurement());
    if (auto v = rec.vicon_measurement()) vicon_meas.push_back(*v);
  }

  std::map<int, PnpSample> sample_by_id;
  for (auto& s : pnp_samples) sample_by_id[s.sample_id] = s;

  auto reconstruct_all = [&](const OffsetPair& offsets,
                             const std::vector<SourceMeasurement>& meas) {
    std::map<int, RigidTransform> out;
    for (const auto& m : meas) out[m.sample_id] = reconstruct_pose(offsets, m);
    return out;
  };

  CalibrationProfile profile;
  profile.kuka_offsets = solve_rwhe(pnp.poses, kuka_meas);
  auto kuka_recon = reconstruct_all(profile.kuka_offsets, kuka_meas);
  profile.kuka_variance = estimate_variances(pnp.poses, kuka_recon, SourceTag::KUKA,
                                             kPositionVarFloor);
  result.kuka = detail::summarize(pnp.poses, kuka_recon, cam, board, sample_by_id);

  if (vicon_meas.size() >= 3) {
    profile.vicon_offsets = solve_rwhe(pnp.poses, vicon_meas);
    auto vicon_recon = reconstruct_all(*profile.vicon_offsets, vicon_meas);
    profile.vicon_variance = estimate_variances(pnp.poses, vicon_recon, SourceTag::VICON,
                                                kPositionVarFloor);
    profile.rejection =
        fit_rejection_model(kuka_recon, vicon_recon, opts.rejection_multiplier);
    result.vicon = detail::summarize(pnp.poses, vicon_recon, cam, board, sample_by_id);

    // fused reconstruction over the calibration set itself
    std::map<int, RigidTransform> fused_recon;
    for (const auto& rec : records) {
      if (!pnp.poses.count(rec.sample_id)) continue;
      auto label = fuse_pose_label(profile, rec.kuka_measurement(), rec.vicon_measurement());
      fused_recon[rec.sample_id] = label.pose;
    }
    result.fused = detail::summarize(pnp.poses, fused_recon, cam, board, sample_by_id);
  } else {
    result.warnings.push_back(
        "fewer than 3 records carry Vicon chains; fusion disabled, profile is KUKA-only");
  }

  profile.metadata.sample_count = static_cast<int>(pnp.poses.size());
  result.profile = std::move(profile);
  return result;
}

/// One label per record; records need not carry board observations.
inline std::vector<FusedPoseLabel> label_records(const std::vector<MeasurementRecord>& records,
                                                 const CalibrationProfile& profile) {
  std::vector<FusedPoseLabel> labels;
  labels.reserve(records.size());
  for (const auto& rec : records) {
    labels.push_back(fuse_pose_label(profile, rec.kuka_measurement(), rec.vicon_measurement()));
  }
  return labels;
}

struct ReportResult {
  double e_t = 0, e_t_std = 0;
  double e_r = 0, e_r_std = 0;
  double speed = 0;
  std::optional<double> e_p;
  std::vector<int> sample_ids;
  std::vector<double> per_sample_t, per_sample_r, per_sample_speed;
};

/// Label-vs-truth metrics, joined on sample_id. Every label must have a truth
/// pose.
inline ReportResult report_metrics(const std::vector<FusedPoseLabel>& labels,
                                   const std::map<int, RigidTransform>& truth) {
  if (labels.empty()) throw LengthMismatch();
  std::vector<RigidTransform> est, tru;
  ReportResult rep;
  for (const auto& l : labels) {
    auto it = truth.find(l.sample_id);
    if (it == truth.end()) throw LengthMismatch();
    est.push_back(l.pose);
    tru.push_back(it->second);
    rep.sample_ids.push_back(l.sample_id);
  }
  auto pe = pose_errors(est, tru);
  rep.per_sample_t = pe.per_sample_t;
  rep.per_sample_r = pe.per_sample_r;
  rep.e_t = pe.e_t;
  rep.e_r = pe.e_r;
  rep.e_t_std = stddev(pe.per_sample_t);
  rep.e_r_std = stddev(pe.per_sample_r);
  for (size_t i = 0; i < est.size(); ++i) {
    rep.per_sample_speed.push_back(
        speed_score({est[i]}, {tru[i]}));
  }
  rep.speed = mean(rep.per_sample_speed);
  return rep;
}

inline std::string format_std(double v) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

/// Three-column console summary matching the report layout: per-source and
/// fused means with one standard deviation.
inline std::string summary_table(const CalibrationResult& r) {
  std::ostringstream os;
  auto row = [&](const std::string& name, auto get) {
    os << std::left << std::setw(12) << name;
    os << std::setw(24) << get(r.kuka);
    os << std::setw(24) << (r.vicon ? get(*r.vicon) : std::string("-"));
    os << std::setw(24) << (r.fused ? get(*r.fused) : std::string("-"));
    os << "\n";
  };
  auto fmt = [](double m, double s) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(3) << m << " +/- " << format_std(s);
    return o.str();
  };
  os << std::left << std::setw(12) << "Metric" << std::setw(24) << "KUKA-only RWHE"
     << std::setw(24) << "Vicon-only RWHE" << std::setw(24) << "Data Fusion" << "\n";
  row("E_T [mm]", [&](const SourceSummary& s) { return fmt(s.e_t * 1e3, s.e_t_std * 1e3); });
  row("E_R [deg]", [&](const SourceSummary& s) {
    return fmt(s.e_r * 180.0 / M_PI, s.e_r_std * 180.0 / M_PI);
  });
  row("E_p [pix]", [&](const SourceSummary& s) { return fmt(s.e_p, s.e_p_std); });
  return os.str();
}

}  // namespace poseforge

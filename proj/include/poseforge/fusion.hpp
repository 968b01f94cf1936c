#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "poseforge/rwhe.hpp"
#include "poseforge/se3.hpp"

namespace poseforge {

struct InsufficientSamples : std::runtime_error {
  InsufficientSamples() : std::runtime_error("estimate_variances: need at least 2 common samples") {}
};

struct ZeroVariance : std::runtime_error {
  ZeroVariance()
      : std::runtime_error("estimate_variances: a variance component is zero; "
                           "apply a floor before fusing") {}
};

// Floors keeping the fusion weights well-defined on degenerate synthetic data.
inline constexpr double kPositionVarFloor = 1e-12;  // (1e-6 m)^2
inline constexpr double kRotationVarFloor = 1e-12;  // (1e-6 rad)^2

struct VarianceModel {
  Vec3 position_var = Vec3::Zero();  // m^2, per camera-frame axis
  double rotation_var = 0;           // rad^2
  SourceTag source_tag = SourceTag::KUKA;
};

struct RejectionModel {
  Vec3 position_sigma = Vec3::Zero();  // m, per axis
  double rotation_sigma = 0;           // rad
  double confidence_multiplier = 1.96;
};

struct ProfileMetadata {
  std::string date;
  int sample_count = 0;
  std::string camera_id;
};

struct CalibrationProfile {
  OffsetPair kuka_offsets;
  std::optional<OffsetPair> vicon_offsets;
  VarianceModel kuka_variance;
  std::optional<VarianceModel> vicon_variance;
  std::optional<RejectionModel> rejection;
  ProfileMetadata metadata;

  bool fusion_enabled() const {
    return vicon_offsets.has_value() && vicon_variance.has_value() && rejection.has_value();
  }
};

enum class Provenance { FUSED, KUKA_ONLY };

struct RejectionFlags {
  bool position[3] = {false, false, false};
  bool rotation = false;
  bool any() const { return position[0] || position[1] || position[2] || rotation; }
};

struct FusedPoseLabel {
  int sample_id = 0;
  RigidTransform pose;
  Provenance provenance = Provenance::KUKA_ONLY;
  Vec3 fused_position_var = Vec3::Zero();
  double fused_rotation_var = 0;
  RejectionFlags rejection_flags;
  bool degenerate_mean_fallback = false;
};

/// Per-source variances of the reconstructed poses against the calibrated
/// truth: componentwise translation variance and scalar angular variance,
/// N-1 denominator, truth taken as the mean.
inline VarianceModel estimate_variances(const std::map<int, RigidTransform>& truth,
                                        const std::map<int, RigidTransform>& reconstructed,
                                        SourceTag tag, double variance_floor = 0.0) {
  Vec3 pos_ss = Vec3::Zero();
  double rot_ss = 0;
  int n = 0;
  for (const auto& [id, rec] : reconstructed) {
    auto it = truth.find(id);
    if (it == truth.end()) continue;
    Vec3 dt = rec.translation - it->second.translation;
    pos_ss += dt.cwiseProduct(dt);
    double dth = geodesic_angle(rec.rotation, it->second.rotation);
    rot_ss += dth * dth;
    ++n;
  }
  if (n < 2) throw InsufficientSamples();
  VarianceModel model;
  model.source_tag = tag;
  model.position_var = pos_ss / (n - 1);
  model.rotation_var = rot_ss / (n - 1);
  if (variance_floor > 0) {
    model.position_var = model.position_var.cwiseMax(variance_floor);
    model.rotation_var = std::max(model.rotation_var, variance_floor);
  } else if (model.position_var.minCoeff() <= 0 || model.rotation_var <= 0) {
    throw ZeroVariance();
  }
  return model;
}

/// Inverse-variance weighted mean per axis; fused variance (s1^-2 + s2^-2)^-1.
inline std::pair<Vec3, Vec3> fuse_position(const Vec3& z_k, const Vec3& z_v,
                                           const Vec3& var_k, const Vec3& var_v) {
  Vec3 x, var;
  for (int i = 0; i < 3; ++i) {
    x[i] = (var_v[i] * z_k[i] + var_k[i] * z_v[i]) / (var_k[i] + var_v[i]);
    var[i] = 1.0 / (1.0 / var_k[i] + 1.0 / var_v[i]);
  }
  return {x, var};
}

/// Chordal mean of the two rotations with inverse-variance weights
/// w_K = var_v / (var_k + var_v), w_V = var_k / (var_k + var_v).
inline Mat3 fuse_rotation(const Mat3& r_k, const Mat3& r_v, double var_k, double var_v) {
  const double w_k = var_v / (var_k + var_v);
  const double w_v = var_k / (var_k + var_v);
  return weighted_rotation_mean({r_k, r_v}, {w_k, w_v});
}

struct RejectionDecision {
  bool rejected = false;
  RejectionFlags flags;
};

/// 1.96-sigma (by default) gate on the Vicon-vs-KUKA reconstruction gap, per
/// position axis and on the geodesic angle.
inline RejectionDecision check_rejection(const RigidTransform& pose_k,
                                         const RigidTransform& pose_v,
                                         const RejectionModel& model) {
  RejectionDecision d;
  Vec3 dt = (pose_v.translation - pose_k.translation).cwiseAbs();
  for (int i = 0; i < 3; ++i) {
    if (dt[i] > model.confidence_multiplier * model.position_sigma[i]) {
      d.flags.position[i] = true;
      d.rejected = true;
    }
  }
  if (geodesic_angle(pose_k.rotation, pose_v.rotation) >
      model.confidence_multiplier * model.rotation_sigma) {
    d.flags.rotation = true;
    d.rejected = true;
  }
  return d;
}

/// Reconstruct from both chains, gate the Vicon reconstruction, fuse or fall
/// back to KUKA-only.
inline FusedPoseLabel fuse_pose_label(const CalibrationProfile& profile,
                                      const SourceMeasurement& kuka_meas,
                                      const std::optional<SourceMeasurement>& vicon_meas) {
  FusedPoseLabel label;
  label.sample_id = kuka_meas.sample_id;
  RigidTransform pose_k = reconstruct_pose(profile.kuka_offsets, kuka_meas);

  auto kuka_only = [&]() {
    label.provenance = Provenance::KUKA_ONLY;
    label.pose = pose_k;
    label.fused_position_var = profile.kuka_variance.position_var;
    label.fused_rotation_var = profile.kuka_variance.rotation_var;
    return label;
  };

  if (!vicon_meas || !profile.fusion_enabled()) return kuka_only();

  RigidTransform pose_v = reconstruct_pose(*profile.vicon_offsets, *vicon_meas);
  auto decision = check_rejection(pose_k, pose_v, *profile.rejection);
  if (decision.rejected) {
    label.rejection_flags = decision.flags;
    return kuka_only();
  }

  const auto& vk = profile.kuka_variance;
  const auto& vv = *profile.vicon_variance;
  try {
    Mat3 fused_rot = fuse_rotation(pose_k.rotation, pose_v.rotation,
                                   vk.rotation_var, vv.rotation_var);
    auto [pos, pos_var] = fuse_position(pose_k.translation, pose_v.translation,
                                        vk.position_var, vv.position_var);
    label.provenance = Provenance::FUSED;
    label.pose = {fused_rot, pos};
    label.fused_position_var = pos_var;
    label.fused_rotation_var = 1.0 / (1.0 / vk.rotation_var + 1.0 / vv.rotation_var);
    return label;
  } catch (const DegenerateMean&) {
    label.degenerate_mean_fallback = true;
    return kuka_only();
  }
}

/// Rejection thresholds from calibration samples: per-axis std of the
/// Vicon-minus-KUKA reconstructed position difference (zero-mean, N-1
/// denominator) and the std of the mutual geodesic angle.
inline RejectionModel fit_rejection_model(const std::map<int, RigidTransform>& kuka_recon,
                                          const std::map<int, RigidTransform>& vicon_recon,
                                          double confidence_multiplier = 1.96) {
  Vec3 pos_ss = Vec3::Zero();
  double rot_ss = 0;
  int n = 0;
  for (const auto& [id, pv] : vicon_recon) {
    auto it = kuka_recon.find(id);
    if (it == kuka_recon.end()) continue;
    Vec3 dt = pv.translation - it->second.translation;
    pos_ss += dt.cwiseProduct(dt);
    double dth = geodesic_angle(pv.rotation, it->second.rotation);
    rot_ss += dth * dth;
    ++n;
  }
  if (n < 2) throw InsufficientSamples();
  RejectionModel model;
  model.position_sigma = (pos_ss / (n - 1)).cwiseMax(kPositionVarFloor).cwiseSqrt();
  model.rotation_sigma = std::sqrt(std::max(rot_ss / (n - 1), kRotationVarFloor));
  model.confidence_multiplier = confidence_multiplier;
  return model;
}

// ---- profile JSON ----

inline nlohmann::json transform_to_json(const RigidTransform& t) {
  std::vector<double> R(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R[3 * r + c] = t.rotation(r, c);
  return {{"R", R}, {"t", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

inline RigidTransform transform_from_json(const nlohmann::json& j) {
  auto R = j.at("R");
  auto t = j.at("t");
  if (R.size() != 9 || t.size() != 3) throw std::invalid_argument("transform: want 9+3 numbers");
  RigidTransform out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.rotation(r, c) = R[3 * r + c].get<double>();
  for (int i = 0; i < 3; ++i) out.translation[i] = t[i].get<double>();
  return out;
}

inline nlohmann::json offsets_to_json(const OffsetPair& o) {
  return {{"target_offset", transform_to_json(o.target_offset)},
          {"camera_offset", transform_to_json(o.camera_offset)},
          {"residual_rms", o.residual_rms}};
}

inline OffsetPair offsets_from_json(const nlohmann::json& j) {
  OffsetPair o;
  o.target_offset = transform_from_json(j.at("target_offset"));
  o.camera_offset = transform_from_json(j.at("camera_offset"));
  o.residual_rms = j.at("residual_rms").get<double>();
  return o;
}

inline nlohmann::json variance_to_json(const VarianceModel& v) {
  return {{"position_var", {v.position_var.x(), v.position_var.y(), v.position_var.z()}},
          {"rotation_var", v.rotation_var},
          {"source", source_name(v.source_tag)}};
}

inline VarianceModel variance_from_json(const nlohmann::json& j) {
  VarianceModel v;
  auto p = j.at("position_var");
  for (int i = 0; i < 3; ++i) v.position_var[i] = p[i].get<double>();
  v.rotation_var = j.at("rotation_var").get<double>();
  v.source_tag = j.at("source").get<std::string>() == "VICON" ? SourceTag::VICON : SourceTag::KUKA;
  return v;
}

inline nlohmann::json profile_to_json(const CalibrationProfile& p) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["kuka_offsets"] = offsets_to_json(p.kuka_offsets);
  j["kuka_variance"] = variance_to_json(p.kuka_variance);
  if (p.vicon_offsets) j["vicon_offsets"] = offsets_to_json(*p.vicon_offsets);
  if (p.vicon_variance) j["vicon_variance"] = variance_to_json(*p.vicon_variance);
  if (p.rejection) {
    j["rejection"] = {
        {"position_sigma",
         {p.rejection->position_sigma.x(), p.rejection->position_sigma.y(),
          p.rejection->position_sigma.z()}},
        {"rotation_sigma", p.rejection->rotation_sigma},
        {"confidence_multiplier", p.rejection->confidence_multiplier}};
  }
  j["metadata"] = {{"date", p.metadata.date},
                   {"sample_count", p.metadata.sample_count},
                   {"camera_id", p.metadata.camera_id}};
  return j;
}

inline CalibrationProfile profile_from_json(const nlohmann::json& j) {
  CalibrationProfile p;
  p.kuka_offsets = offsets_from_json(j.at("kuka_offsets"));
  p.kuka_variance = variance_from_json(j.at("kuka_variance"));
  if (j.contains("vicon_offsets")) p.vicon_offsets = offsets_from_json(j.at("vicon_offsets"));
  if (j.contains("vicon_variance")) p.vicon_variance = variance_from_json(j.at("vicon_variance"));
  if (j.contains("rejection")) {
    RejectionModel r;
    auto ps = j.at("rejection").at("position_sigma");
    for (int i = 0; i < 3; ++i) r.position_sigma[i] = ps[i].get<double>();
    r.rotation_sigma = j.at("rejection").at("rotation_sigma").get<double>();
    r.confidence_multiplier = j.at("rejection").at("confidence_multiplier").get<double>();
    p.rejection = r;
  }
  if (j.contains("metadata")) {
    p.metadata.date = j.at("metadata").value("date", "");
    p.metadata.sample_count = j.at("metadata").value("sample_count", 0);
    p.metadata.camera_id = j.at("metadata").value("camera_id", "");
  }
  return p;
}

}  // namespace poseforge

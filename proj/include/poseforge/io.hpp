#pragma once

#include <Eigen/SVD>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "poseforge/camera.hpp"
#include "poseforge/fusion.hpp"
#include "poseforge/se3.hpp"
#include "poseforge/sim.hpp"

namespace poseforge {

struct ParseError : std::runtime_error {
  ParseError(const std::string& path, int line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what) {}
};

struct ValidationError : std::runtime_error {
  ValidationError(const std::string& path, int line, const std::string& field,
                  const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": field '" + field + "': " + what) {}
};

/// One synchronized record of both measurement chains plus optional board
/// observations. Global-frame transforms as reported by each source.
struct MeasurementRecord {
  int sample_id = 0;
  RigidTransform kuka_camera_chain;  // T_{C_K K}
  RigidTransform kuka_target_chain;  // T_{T_K K}
  std::optional<RigidTransform> vicon_camera_chain;
  std::optional<RigidTransform> vicon_target_chain;
  std::vector<FeatureObservation> observations;
  bool reorthonormalized = false;

  bool has_vicon() const { return vicon_camera_chain && vicon_target_chain; }

  /// Relative end-effector chain T_{T_S C_S} = (T_{C_S S})^-1 T_{T_S S}.
  SourceMeasurement kuka_measurement() const {
    return {sample_id, compose(invert(kuka_camera_chain), kuka_target_chain), SourceTag::KUKA};
  }
  std::optional<SourceMeasurement> vicon_measurement() const {
    if (!has_vicon()) return std::nullopt;
    return SourceMeasurement{
        sample_id, compose(invert(*vicon_camera_chain), *vicon_target_chain), SourceTag::VICON};
  }
};

namespace detail {

/// Nearest rotation by polar decomposition (SVD with sign fix).
inline Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixU() * svd.matrixV().transpose();
  if (R.determinant() < 0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1;
    R = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return R;
}

inline RigidTransform parse_transform(const nlohmann::json& j, const std::string& path, int line,
                                      const std::string& field, bool& flagged) {
  RigidTransform t;
  try {
    t = transform_from_json(j);
  } catch (const std::exception& e) {
    throw ValidationError(path, line, field, e.what());
  }
  const Mat3& R = t.rotation;
  if (R.determinant() < 0) {
    throw ValidationError(path, line, field, "rotation has negative determinant (reflection)");
  }
  const double ortho_err = (R.transpose() * R - Mat3::Identity()).norm();
  if (ortho_err > 1e-6) {
    throw ValidationError(path, line, field,
                          "rotation not orthonormal (error " + std::to_string(ortho_err) + ")");
  }
  if (ortho_err > 1e-12) {
    t.rotation = nearest_rotation(R);
    flagged = true;
  }
  return t;
}

}  // namespace detail

inline nlohmann::json record_to_json(const MeasurementRecord& rec) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["sample_id"] = rec.sample_id;
  j["kuka_camera_chain"] = transform_to_json(rec.kuka_camera_chain);
  j["kuka_target_chain"] = transform_to_json(rec.kuka_target_chain);
  if (rec.vicon_camera_chain) j["vicon_camera_chain"] = transform_to_json(*rec.vicon_camera_chain);
  if (rec.vicon_target_chain) j["vicon_target_chain"] = transform_to_json(*rec.vicon_target_chain);
  if (!rec.observations.empty()) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : rec.observations) {
      obs.push_back({{"id", o.feature_id}, {"px", o.pixel.x()}, {"py", o.pixel.y()}});
    }
    j["observations"] = obs;
  }
  return j;
}

inline void emit_measurements(const std::vector<MeasurementRecord>& records,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& rec : records) out << record_to_json(rec).dump() << "\n";
}

inline std::vector<MeasurementRecord> ingest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<MeasurementRecord> records;
  std::string line;
  int lineno = 0;
  std::set<int> seen_ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path, lineno, e.what());
    }
    MeasurementRecord rec;
    try {
      rec.sample_id = j.at("sample_id").get<int>();
    } catch (const std::exception& e) {
      throw ValidationError(path, lineno, "sample_id", e.what());
    }
    if (!seen_ids.insert(rec.sample_id).second) {
      throw ValidationError(path, lineno, "sample_id", "duplicate id " +
                            std::to_string(rec.sample_id));
    }
    bool flagged = false;
    if (!j.contains("kuka_camera_chain") || !j.contains("kuka_target_chain")) {
      throw ValidationError(path, lineno, "kuka_camera_chain", "KUKA chains are required");
    }
    rec.kuka_camera_chain =
        detail::parse_transform(j.at("kuka_camera_chain"), path, lineno, "kuka_camera_chain", flagged);
    rec.kuka_target_chain =
        detail::parse_transform(j.at("kuka_target_chain"), path, lineno, "kuka_target_chain", flagged);
    if (j.contains("vicon_camera_chain")) {
      rec.vicon_camera_chain =
          detail::parse_transform(j.at("vicon_camera_chain"), path, lineno, "vicon_camera_chain", flagged);
    }
    if (j.contains("vicon_target_chain")) {
      rec.vicon_target_chain =
          detail::parse_transform(j.at("vicon_target_chain"), path, lineno, "vicon_target_chain", flagged);
    }
    if (j.contains("observations")) {
      for (const auto& o : j.at("observations")) {
        FeatureObservation obs;
        try {
          obs.feature_id = o.at("id").get<int>();
          obs.pixel = Vec2(o.at("px").get<double>(), o.at("py").get<double>());
        } catch (const std::exception& e) {
          throw ValidationError(path, lineno, "observations", e.what());
        }
        rec.observations.push_back(obs);
      }
    }
    rec.reorthonormalized = flagged;
    records.push_back(std::move(rec));
  }
  return records;
}

inline MeasurementRecord record_from_sim(const SimRecord& s) {
  MeasurementRecord rec;
  rec.sample_id = s.sample_id;
  rec.kuka_camera_chain = s.kuka_camera_chain;
  rec.kuka_target_chain = s.kuka_target_chain;
  rec.vicon_camera_chain = s.vicon_camera_chain;
  rec.vicon_target_chain = s.vicon_target_chain;
  rec.observations = s.observations;
  return rec;
}

// ---- board spec document ----

inline nlohmann::json board_to_json(const BoardSpec& b) {
  return {{"schema_version", 1},
          {"squares_x", b.squares_x},
          {"squares_y", b.squares_y},
          {"square_size", b.square_size},
          {"board_to_target", transform_to_json(b.board_to_target)}};
}

inline BoardSpec board_from_json(const nlohmann::json& j) {
  BoardSpec b;
  b.squares_x = j.at("squares_x").get<int>();
  b.squares_y = j.at("squares_y").get<int>();
  b.square_size = j.at("square_size").get<double>();
  b.board_to_target = transform_from_json(j.at("board_to_target"));
  b.validate();
  return b;
}

// ---- truth sidecar (sample_id -> T_TC) ----

inline void emit_truth(const std::vector<SimRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& rec : records) {
    nlohmann::json j = {{"schema_version", 1},
                        {"sample_id", rec.sample_id},
                        {"pose", transform_to_json(rec.truth)}};
    out << j.dump() << "\n";
  }
}

inline std::map<int, RigidTransform> ingest_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::map<int, RigidTransform> truth;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path, lineno, e.what());
    }
    truth[j.at("sample_id").get<int>()] = transform_from_json(j.at("pose"));
  }
  return truth;
}

// ---- labels ----

inline nlohmann::json label_to_json(const FusedPoseLabel& l) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["sample_id"] = l.sample_id;
  j["pose"] = transform_to_json(l.pose);
  j["provenance"] = l.provenance == Provenance::FUSED ? "FUSED" : "KUKA_ONLY";
  j["position_var"] = {l.fused_position_var.x(), l.fused_position_var.y(),
                       l.fused_position_var.z()};
  j["rotation_var"] = l.fused_rotation_var;
  if (l.rejection_flags.any()) {
    std::vector<std::string> flags;
    const char* axes[] = {"position.x", "position.y", "position.z"};
    for (int i = 0; i < 3; ++i)
      if (l.rejection_flags.position[i]) flags.push_back(axes[i]);
    if (l.rejection_flags.rotation) flags.push_back("rotation");
    j["rejection_flags"] = flags;
  }
  if (l.degenerate_mean_fallback) j["degenerate_mean_fallback"] = true;
  return j;
}

inline FusedPoseLabel label_from_json(const nlohmann::json& j) {
  FusedPoseLabel l;
  l.sample_id = j.at("sample_id").get<int>();
  l.pose = transform_from_json(j.at("pose"));
  l.provenance = j.at("provenance").get<std::string>() == "FUSED" ? Provenance::FUSED
                                                                  : Provenance::KUKA_ONLY;
  auto pv = j.at("position_var");
  for (int i = 0; i < 3; ++i) l.fused_position_var[i] = pv[i].get<double>();
  l.fused_rotation_var = j.at("rotation_var").get<double>();
  if (j.contains("rejection_flags")) {
    for (const auto& f : j.at("rejection_flags")) {
      const std::string s = f.get<std::string>();
      if (s == "position.x") l.rejection_flags.position[0] = true;
      if (s == "position.y") l.rejection_flags.position[1] = true;
      if (s == "position.z") l.rejection_flags.position[2] = true;
      if (s == "rotation") l.rejection_flags.rotation = true;
    }
  }
  l.degenerate_mean_fallback = j.value("degenerate_mean_fallback", false);
  return l;
}

inline void emit_labels(const std::vector<FusedPoseLabel>& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& l : labels) out << label_to_json(l).dump() << "\n";
}

inline std::vector<FusedPoseLabel> ingest_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<FusedPoseLabel> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      labels.push_back(label_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  return labels;
}

}  // namespace poseforge

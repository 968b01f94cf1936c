#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "poseforge/io.hpp"
#include "poseforge/pipeline.hpp"
#include "poseforge/sim.hpp"

namespace fs = std::filesystem;
using namespace poseforge;

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };
LogLevel g_log_level = LogLevel::info;

void log_info(const std::string& msg) {
  if (g_log_level >= LogLevel::info) std::cerr << "[info] " << msg << "\n";
}

void log_debug(const std::string& msg) {
  if (g_log_level >= LogLevel::debug) std::cerr << "[debug] " << msg << "\n";
}

LogLevel parse_level(const std::string& s) {
  if (s == "quiet") return LogLevel::quiet;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  return nlohmann::json::parse(in);
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
}

int run_simulate(const std::string& scenario_path, const std::string& out_dir, uint64_t seed,
                 int samples, bool noiseless) {
  SimScenario scenario =
      scenario_path.empty() ? default_paper_scenario(seed)
                            : scenario_from_json(read_json_file(scenario_path));
  scenario.rng_seed = seed;
  if (samples > 0) scenario.sample_count = samples;
  if (noiseless) {
    scenario.kuka_noise = {};
    scenario.vicon_noise = {};
    scenario.pixel_noise_sigma = 0;
  }

  fs::create_directories(out_dir);
  SimOutput out = generate(scenario);

  std::vector<MeasurementRecord> records;
  records.reserve(out.records.size());
  for (const auto& r : out.records) records.push_back(record_from_sim(r));

  emit_measurements(records, out_dir + "/measurements.jsonl");
  emit_truth(out.records, out_dir + "/truth.jsonl");
  write_json_file(out.manifest, out_dir + "/manifest.json");
  write_json_file(to_json(scenario.camera), out_dir + "/camera.json");
  write_json_file(board_to_json(scenario.board), out_dir + "/board.json");
  log_info("wrote " + std::to_string(records.size()) + " records to " + out_dir);
  return 0;
}

int run_calibrate(const std::string& measurements, const std::string& camera_path,
                  const std::string& board_path, const std::string& profile_path,
                  bool refine_intrinsics, double reject_multiplier) {
  auto records = ingest(measurements);
  auto camera = camera_from_json(read_json_file(camera_path));
  auto board = board_from_json(read_json_file(board_path));

  CalibrationOptions opts;
  opts.refine_intrinsics = refine_intrinsics;
  opts.rejection_multiplier = reject_multiplier;
  auto result = calibrate(records, camera, board, opts);
  for (const auto& w : result.warnings) std::cerr << "[warn] " << w << "\n";

  write_json_file(profile_to_json(result.profile), profile_path);
  std::cout << summary_table(result);
  log_info("profile written to " + profile_path);
  return 0;
}

int run_label(const std::string& measurements, const std::string& profile_path,
              const std::string& out_path) {
  if (!fs::exists(profile_path)) throw MissingProfile(profile_path);
  auto profile = profile_from_json(read_json_file(profile_path));
  auto records = ingest(measurements);
  auto labels = label_records(records, profile);
  emit_labels(labels, out_path);

  int rejected = 0, fused = 0, kuka_only = 0;
  for (const auto& l : labels) {
    if (l.provenance == Provenance::FUSED) ++fused;
    else ++kuka_only;
    if (l.rejection_flags.any()) ++rejected;
  }
  std::cout << "labels: " << labels.size() << "  fused: " << fused
            << "  kuka-only: " << kuka_only << "  vicon-rejected: " << rejected << "\n";
  return 0;
}

int run_report(const std::string& labels_path, const std::string& truth_path,
               const std::string& out_dir, const std::string& camera_path,
               const std::string& board_path, const std::string& measurements_path) {
  auto labels = ingest_labels(labels_path);
  auto truth = ingest_truth(truth_path);
  auto rep = report_metrics(labels, truth);

  // Optional reprojection metric against observed board corners.
  if (!camera_path.empty() && !board_path.empty() && !measurements_path.empty()) {
    auto camera = camera_from_json(read_json_file(camera_path));
    auto board = board_from_json(read_json_file(board_path));
    auto records = ingest(measurements_path);
    std::map<int, PnpSample> samples;
    for (const auto& r : records) {
      if (!r.observations.empty()) samples[r.sample_id] = {r.sample_id, r.observations};
    }
    std::vector<RigidTransform> poses;
    std::vector<PnpSample> matched;
    for (const auto& l : labels) {
      auto it = samples.find(l.sample_id);
      if (it == samples.end()) continue;
      poses.push_back(l.pose);
      matched.push_back(it->second);
    }
    if (!poses.empty()) rep.e_p = reprojection_error(camera, board, poses, matched);
  }

  fs::create_directories(out_dir);
  {
    std::ofstream csv(out_dir + "/per_sample.csv");
    csv << "sample_id,e_t_m,e_r_rad,speed\n";
    for (size_t i = 0; i < rep.sample_ids.size(); ++i) {
      csv << rep.sample_ids[i] << "," << rep.per_sample_t[i] << "," << rep.per_sample_r[i]
          << "," << rep.per_sample_speed[i] << "\n";
    }
  }
  nlohmann::json summary = {
      {"schema_version", 1},
      {"sample_count", rep.sample_ids.size()},
      {"e_t_m", {{"mean", rep.e_t}, {"std", format_std(rep.e_t_std)}}},
      {"e_r_deg",
       {{"mean", rep.e_r * 180.0 / M_PI}, {"std", format_std(rep.e_r_std * 180.0 / M_PI)}}},
      {"speed_score", rep.speed}};
  if (rep.e_p) summary["e_p_px"] = *rep.e_p;
  write_json_file(summary, out_dir + "/summary.json");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-source extrinsic calibration and pose labeling pipeline"};
  app.require_subcommand(1);

  std::string log_level = "info";
  app.add_option("--log-level", log_level, "quiet, info, or debug");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate synthetic measurement and truth files");
  std::string sim_scenario, sim_out = "sim_out";
  uint64_t sim_seed = 1;
  int sim_samples = 0;
  bool sim_noiseless = false;
  sim->add_option("--scenario", sim_scenario, "scenario JSON (defaults to the desk-scale scenario)");
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--samples", sim_samples, "override sample count");
  sim->add_flag("--noiseless", sim_noiseless, "zero all noise terms");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "solve PnP + RWHE and write a calibration profile");
  std::string cal_meas, cal_camera, cal_board, cal_profile = "profile.json";
  bool refine_intrinsics = false;
  double reject_multiplier = 1.96;
  cal->add_option("--measurements", cal_meas)->required();
  cal->add_option("--camera", cal_camera)->required();
  cal->add_option("--board", cal_board)->required();
  cal->add_option("--profile", cal_profile, "output profile path");
  cal->add_flag("--refine-intrinsics", refine_intrinsics);
  cal->add_option("--reject-multiplier", reject_multiplier, "sigma gate multiplier");

  // label
  auto* lab = app.add_subcommand("label", "fuse chains into pose labels");
  std::string lab_meas, lab_profile, lab_out = "labels.jsonl";
  lab->add_option("--measurements", lab_meas)->required();
  lab->add_option("--profile", lab_profile)->required();
  lab->add_option("--out", lab_out, "output labels path");

  // report
  auto* repc = app.add_subcommand("report", "metric report from labels vs truth");
  std::string rep_labels, rep_truth, rep_out = "report_out";
  std::string rep_camera, rep_board, rep_meas;
  repc->add_option("--labels", rep_labels)->required();
  repc->add_option("--truth", rep_truth)->required();
  repc->add_option("--out", rep_out, "output directory");
  repc->add_option("--camera", rep_camera, "camera JSON, enables reprojection metric");
  repc->add_option("--board", rep_board, "board JSON, enables reprojection metric");
  repc->add_option("--measurements", rep_meas, "measurements with observations, enables reprojection metric");

  CLI11_PARSE(app, argc, argv);

  if (const char* env = std::getenv("POSEFORGE_LOG")) log_level = env;
  g_log_level = parse_level(log_level);

  try {
    if (sim->parsed()) return run_simulate(sim_scenario, sim_out, sim_seed, sim_samples, sim_noiseless);
    if (cal->parsed())
      return run_calibrate(cal_meas, cal_camera, cal_board, cal_profile, refine_intrinsics,
                           reject_multiplier);
    if (lab->parsed()) return run_label(lab_meas, lab_profile, lab_out);
    if (repc->parsed())
      return run_report(rep_labels, rep_truth, rep_out, rep_camera, rep_board, rep_meas);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const MissingProfile& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

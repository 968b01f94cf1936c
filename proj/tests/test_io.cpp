#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "poseforge/io.hpp"
#include "test_helpers.hpp"

using namespace poseforge;
using pf_test::random_transform;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("pf_io_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

MeasurementRecord make_record(std::mt19937_64& rng, int id, bool with_vicon = true) {
  MeasurementRecord rec;
  rec.sample_id = id;
  rec.kuka_camera_chain = random_transform(rng);
  rec.kuka_target_chain = random_transform(rng);
  if (with_vicon) {
    rec.vicon_camera_chain = random_transform(rng);
    rec.vicon_target_chain = random_transform(rng);
  }
  rec.observations.push_back({3, Vec2(100.5, 200.25)});
  rec.observations.push_back({7, Vec2(300.0, 400.0)});
  return rec;
}

}  // namespace

TEST_CASE("measurement round trip") {
  TempDir dir;
  std::mt19937_64 rng(173);
  std::vector<MeasurementRecord> records;
  records.push_back(make_record(rng, 0));
  records.push_back(make_record(rng, 1, false));
  records.push_back(make_record(rng, 5));
  emit_measurements(records, dir.file("m.jsonl"));
  auto back = ingest(dir.file("m.jsonl"));

  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].sample_id == records[i].sample_id);
    CHECK((back[i].kuka_camera_chain.matrix() - records[i].kuka_camera_chain.matrix()).norm() ==
          0.0);
    CHECK((back[i].kuka_target_chain.matrix() - records[i].kuka_target_chain.matrix()).norm() ==
          0.0);
    CHECK(back[i].has_vicon() == records[i].has_vicon());
    REQUIRE(back[i].observations.size() == records[i].observations.size());
    for (size_t k = 0; k < back[i].observations.size(); ++k) {
      CHECK(back[i].observations[k].feature_id == records[i].observations[k].feature_id);
      CHECK((back[i].observations[k].pixel - records[i].observations[k].pixel).norm() == 0.0);
    }
    CHECK_FALSE(back[i].reorthonormalized);
  }
  CHECK_FALSE(back[1].vicon_measurement().has_value());
  CHECK(back[0].vicon_measurement().has_value());
}

TEST_CASE("ingest edge cases") {
  TempDir dir;
  std::mt19937_64 rng(179);

  SUBCASE("empty file gives empty list") {
    std::ofstream(dir.file("empty.jsonl")).close();
    CHECK(ingest(dir.file("empty.jsonl")).empty());
  }

  SUBCASE("missing file throws") {
    CHECK_THROWS_AS(ingest(dir.file("nope.jsonl")), std::runtime_error);
  }

  SUBCASE("malformed JSON is a ParseError with line number") {
    std::ofstream f(dir.file("bad.jsonl"));
    f << record_to_json(make_record(rng, 0)).dump() << "\n";
    f << "{not json\n";
    f.close();
    try {
      ingest(dir.file("bad.jsonl"));
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }

  SUBCASE("duplicate sample id rejected") {
    std::ofstream f(dir.file("dup.jsonl"));
    f << record_to_json(make_record(rng, 4)).dump() << "\n";
    f << record_to_json(make_record(rng, 4)).dump() << "\n";
    f.close();
    CHECK_THROWS_AS(ingest(dir.file("dup.jsonl")), ValidationError);
  }

  SUBCASE("reflection rejected") {
    MeasurementRecord rec = make_record(rng, 0);
    auto j = record_to_json(rec);
    // negate a row: determinant flips to -1
    for (int c = 0; c < 3; ++c) {
      j["kuka_camera_chain"]["R"][c] = -j["kuka_camera_chain"]["R"][c].get<double>();
    }
    std::ofstream f(dir.file("refl.jsonl"));
    f << j.dump() << "\n";
    f.close();
    CHECK_THROWS_AS(ingest(dir.file("refl.jsonl")), ValidationError);
  }

  SUBCASE("grossly non-orthonormal rejected") {
    MeasurementRecord rec = make_record(rng, 0);
    auto j = record_to_json(rec);
    j["kuka_target_chain"]["R"][0] = 1.5;
    j["kuka_target_chain"]["R"][1] = 0.5;
    std::ofstream f(dir.file("skew.jsonl"));
    f << j.dump() << "\n";
    f.close();
    CHECK_THROWS_AS(ingest(dir.file("skew.jsonl")), ValidationError);
  }

  SUBCASE("mild drift is re-orthonormalized and flagged") {
    MeasurementRecord rec = make_record(rng, 0);
    auto j = record_to_json(rec);
    // perturb one entry by 1e-8: within tolerance, beyond exactness
    j["kuka_camera_chain"]["R"][4] = j["kuka_camera_chain"]["R"][4].get<double>() + 1e-8;
    std::ofstream f(dir.file("drift.jsonl"));
    f << j.dump() << "\n";
    f.close();
    auto back = ingest(dir.file("drift.jsonl"));
    REQUIRE(back.size() == 1);
    CHECK(back[0].reorthonormalized);
    const Mat3& R = back[0].kuka_camera_chain.rotation;
    CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-12);
    CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("missing KUKA chain rejected") {
    auto j = record_to_json(make_record(rng, 0));
    j.erase("kuka_target_chain");
    std::ofstream f(dir.file("nok.jsonl"));
    f << j.dump() << "\n";
    f.close();
    CHECK_THROWS_AS(ingest(dir.file("nok.jsonl")), ValidationError);
  }
}

TEST_CASE("relative chain computation") {
  std::mt19937_64 rng(181);
  MeasurementRecord rec = make_record(rng, 9);
  SourceMeasurement k = rec.kuka_measurement();
  CHECK(k.sample_id == 9);
  CHECK(k.source_tag == SourceTag::KUKA);
  RigidTransform expect = compose(invert(rec.kuka_camera_chain), rec.kuka_target_chain);
  CHECK((k.target_chain.matrix() - expect.matrix()).norm() == 0.0);
  CHECK(rec.vicon_measurement()->source_tag == SourceTag::VICON);
}

TEST_CASE("board spec document") {
  TempDir dir;
  BoardSpec b;
  b.squares_x = 11;
  b.squares_y = 9;
  b.square_size = 0.025;
  b.board_to_target = RigidTransform{rodrigues_to_matrix(Vec3(0, 0, 0.1)), Vec3(0.01, 0.02, 0)};
  auto back = board_from_json(board_to_json(b));
  CHECK(back.squares_x == 11);
  CHECK(back.squares_y == 9);
  CHECK(back.square_size == 0.025);
  CHECK((back.board_to_target.matrix() - b.board_to_target.matrix()).norm() == 0.0);

  auto bad = board_to_json(b);
  bad["squares_x"] = 1;
  CHECK_THROWS(board_from_json(bad));
}

TEST_CASE("truth sidecar round trip") {
  TempDir dir;
  std::mt19937_64 rng(191);
  std::vector<SimRecord> sims(3);
  for (int i = 0; i < 3; ++i) {
    sims[i].sample_id = 10 + i;
    sims[i].truth = random_transform(rng);
  }
  emit_truth(sims, dir.file("t.jsonl"));
  auto truth = ingest_truth(dir.file("t.jsonl"));
  REQUIRE(truth.size() == 3);
  for (const auto& s : sims) {
    CHECK((truth.at(s.sample_id).matrix() - s.truth.matrix()).norm() == 0.0);
  }
}

TEST_CASE("label round trip") {
  TempDir dir;
  std::mt19937_64 rng(193);
  std::vector<FusedPoseLabel> labels(2);
  labels[0].sample_id = 0;
  labels[0].pose = random_transform(rng);
  labels[0].provenance = Provenance::FUSED;
  labels[0].fused_position_var = Vec3(1e-7, 2e-7, 3e-7);
  labels[0].fused_rotation_var = 4e-7;
  labels[1].sample_id = 1;
  labels[1].pose = random_transform(rng);
  labels[1].provenance = Provenance::KUKA_ONLY;
  labels[1].rejection_flags.position[1] = true;
  labels[1].rejection_flags.rotation = true;
  labels[1].degenerate_mean_fallback = true;

  emit_labels(labels, dir.file("l.jsonl"));
  auto back = ingest_labels(dir.file("l.jsonl"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].provenance == Provenance::FUSED);
  CHECK((back[0].pose.matrix() - labels[0].pose.matrix()).norm() == 0.0);
  CHECK((back[0].fused_position_var - labels[0].fused_position_var).norm() == 0.0);
  CHECK(back[0].fused_rotation_var == 4e-7);
  CHECK_FALSE(back[0].rejection_flags.any());
  CHECK(back[1].provenance == Provenance::KUKA_ONLY);
  CHECK(back[1].rejection_flags.position[1]);
  CHECK_FALSE(back[1].rejection_flags.position[0]);
  CHECK(back[1].rejection_flags.rotation);
  CHECK(back[1].degenerate_mean_fallback);
}

TEST_CASE("sim records convert to measurement records losslessly") {
  SimScenario s = default_paper_scenario(29);
  s.sample_count = 4;
  auto out = generate(s);
  TempDir dir;
  std::vector<MeasurementRecord> recs;
  for (const auto& r : out.records) recs.push_back(record_from_sim(r));
  emit_measurements(recs, dir.file("sim.jsonl"));
  auto back = ingest(dir.file("sim.jsonl"));
  REQUIRE(back.size() == 4);
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK((back[i].kuka_target_chain.matrix() - out.records[i].kuka_target_chain.matrix()).norm() ==
          0.0);
    CHECK(back[i].observations.size() == out.records[i].observations.size());
  }
}

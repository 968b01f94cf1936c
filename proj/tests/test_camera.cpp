#include <doctest.h>

#include <random>

#include "poseforge/camera.hpp"
#include "test_helpers.hpp"

using namespace poseforge;

namespace {

CameraModel test_camera() {
  CameraModel c;
  c.fx = 1000;
  c.fy = 1000;
  c.cx = 500;
  c.cy = 400;
  c.width = 1000;
  c.height = 800;
  return c;
}

// Straight-line reimplementation of the distortion polynomial, kept separate
// from the library code path.
Vec2 distortion_oracle(const Eigen::Matrix<double, 5, 1>& d, double x, double y) {
  const double k1 = d[0], k2 = d[1], p1 = d[2], p2 = d[3], k3 = d[4];
  const double r2 = x * x + y * y;
  const double r4 = r2 * r2;
  const double r6 = r4 * r2;
  const double s = 1 + k1 * r2 + k2 * r4 + k3 * r6;
  return {x * s + 2 * p1 * x * y + p2 * (r2 + 2 * x * x),
          y * s + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y};
}

}  // namespace

TEST_CASE("project basics") {
  CameraModel cam = test_camera();
  RigidTransform id;

  CHECK((project(cam, id, Vec3(0, 0, 0.3)) - Vec2(500, 400)).norm() == 0.0);
  CHECK((project(cam, id, Vec3(0, 0, 5.0)) - Vec2(500, 400)).norm() == 0.0);
  CHECK(project(cam, id, Vec3(0.1, 0, 1)).x() == doctest::Approx(600.0));

  CHECK_THROWS_AS(project(cam, id, Vec3(0, 0, -1)), BehindCamera);
  CHECK_THROWS_AS(project(cam, id, Vec3(0, 0, 0)), BehindCamera);
}

TEST_CASE("projective scaling invariance with zero distortion") {
  CameraModel cam = test_camera();
  RigidTransform id;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3), lam(0.5, 4.0);
  for (int i = 0; i < 100; ++i) {
    Vec3 p(u(rng), u(rng), 1.0 + std::abs(u(rng)));
    Vec2 a = project(cam, id, p);
    Vec2 b = project(cam, id, lam(rng) * p);
    CHECK((a - b).norm() < 1e-9);
  }
}

TEST_CASE("distortion matches independent implementation") {
  CameraModel cam = test_camera();
  cam.distortion << -0.21, 0.08, 0.001, -0.0005, 0.01;
  RigidTransform id;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 200; ++i) {
    Vec3 p(u(rng), u(rng), 1.0);
    Vec2 px = project(cam, id, p);
    Vec2 nd = distortion_oracle(cam.distortion, p.x(), p.y());
    Vec2 expect(cam.fx * nd.x() + cam.cx, cam.fy * nd.y() + cam.cy);
    CHECK((px - expect).norm() < 1e-9);
  }

  // distortion is the identity at the principal point
  CHECK((project(cam, id, Vec3(0, 0, 1)) - Vec2(cam.cx, cam.cy)).norm() == 0.0);

  // fixed-point undistortion inverts within DLT-grade accuracy
  for (int i = 0; i < 100; ++i) {
    Vec2 n(u(rng), u(rng));
    Vec2 back = undistort_normalized(cam.distortion, distort_normalized(cam.distortion, n));
    CHECK((back - n).norm() < 1e-8);
  }
}

TEST_CASE("board_corners_in_target") {
  BoardSpec spec;
  spec.squares_x = 3;
  spec.squares_y = 3;
  spec.square_size = 0.1;

  auto corners = board_corners_in_target(spec);
  REQUIRE(corners.size() == 4);
  CHECK((corners[0].second - Vec3(0.1, 0.1, 0)).norm() < 1e-15);
  CHECK((corners[1].second - Vec3(0.2, 0.1, 0)).norm() < 1e-15);
  CHECK((corners[2].second - Vec3(0.1, 0.2, 0)).norm() < 1e-15);
  CHECK((corners[3].second - Vec3(0.2, 0.2, 0)).norm() < 1e-15);

  SUBCASE("11x11 board of 30 mm squares") {
    BoardSpec big;
    big.squares_x = 11;
    big.squares_y = 11;
    big.square_size = 0.03;
    auto c = board_corners_in_target(big);
    CHECK(c.size() == 100);
    double max_coord = 0;
    for (const auto& [id, p] : c) max_coord = std::max(max_coord, p.cwiseAbs().maxCoeff());
    CHECK(max_coord == doctest::Approx(0.30));
  }

  SUBCASE("pure translation shifts all corners") {
    BoardSpec shifted = spec;
    Vec3 t(0.5, -0.2, 0.1);
    shifted.board_to_target = RigidTransform{Mat3::Identity(), t};
    auto c = board_corners_in_target(shifted);
    for (size_t i = 0; i < c.size(); ++i) {
      CHECK((c[i].second - corners[i].second - t).norm() < 1e-15);
    }
  }

  SUBCASE("count formula holds") {
    for (int sx = 3; sx <= 8; ++sx) {
      for (int sy = 3; sy <= 8; ++sy) {
        BoardSpec b{sx, sy, 0.02, {}};
        CHECK(static_cast<int>(board_corners_in_target(b).size()) == (sx - 1) * (sy - 1));
      }
    }
  }
}

TEST_CASE("camera JSON round trip and validation") {
  CameraModel cam = test_camera();
  cam.distortion << -0.1, 0.02, 0.0003, -0.0001, 0.004;
  CameraModel back = camera_from_json(to_json(cam));
  CHECK(back.fx == cam.fx);
  CHECK((back.distortion - cam.distortion).norm() == 0.0);
  CHECK(back.width == cam.width);

  CameraModel bad = cam;
  bad.fx = -1;
  CHECK_THROWS_AS(camera_from_json(to_json(bad)), std::invalid_argument);
}

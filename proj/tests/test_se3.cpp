#include <doctest.h>

#include <random>

#include "poseforge/se3.hpp"
#include "test_helpers.hpp"

using namespace poseforge;
using pf_test::random_rotation;
using pf_test::random_transform;
using pf_test::random_unit_vector;

TEST_CASE("rodrigues_to_matrix basics") {
  CHECK((rodrigues_to_matrix(Vec3::Zero()) - Mat3::Identity()).norm() == 0.0);

  // quarter turn about x maps (0,1,0) to (0,0,1)
  Mat3 R = rodrigues_to_matrix(Vec3(M_PI / 2, 0, 0));
  Vec3 mapped = R * Vec3(0, 1, 0);
  CHECK((mapped - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("rodrigues round trip") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> angle(1e-6, M_PI - 1e-6);
  for (int i = 0; i < 100; ++i) {
    Vec3 r = angle(rng) * random_unit_vector(rng);
    Vec3 back = matrix_to_rodrigues(rodrigues_to_matrix(r));
    CHECK((back - r).norm() < 1e-10);
  }
  // matrix -> vector -> matrix on random rotations
  for (int i = 0; i < 100; ++i) {
    Mat3 R = random_rotation(rng);
    CHECK((rodrigues_to_matrix(matrix_to_rodrigues(R)) - R).norm() < 1e-10);
  }
}

TEST_CASE("matrix_to_rodrigues canonical cases") {
  CHECK(matrix_to_rodrigues(Mat3::Identity()).norm() == 0.0);

  Mat3 Rz180 = rodrigues_to_matrix(Vec3(0, 0, M_PI));
  Vec3 r = matrix_to_rodrigues(Rz180);
  CHECK((r - Vec3(0, 0, M_PI)).norm() < 1e-9);

  // pi about -x must come back with positive first nonzero component
  Mat3 Rx180 = rodrigues_to_matrix(Vec3(-M_PI, 0, 0));
  Vec3 rx = matrix_to_rodrigues(Rx180);
  CHECK(rx.x() > 0);
  CHECK((rodrigues_to_matrix(rx) - Rx180).norm() < 1e-9);
}

TEST_CASE("compose and invert") {
  std::mt19937_64 rng(11);
  RigidTransform id = RigidTransform::Identity();

  RigidTransform t = random_transform(rng);
  CHECK((compose(t, id).matrix() - t.matrix()).norm() < 1e-15);
  CHECK((compose(t, invert(t)).matrix() - Eigen::Matrix4d::Identity()).norm() < 1e-12);

  CHECK((invert(id).matrix() - Eigen::Matrix4d::Identity()).norm() == 0.0);
  RigidTransform pure_t{Mat3::Identity(), Vec3(0, 0, 1)};
  CHECK((invert(pure_t).translation - Vec3(0, 0, -1)).norm() == 0.0);

  // matches explicit 4x4 multiply
  for (int i = 0; i < 50; ++i) {
    RigidTransform a = random_transform(rng), b = random_transform(rng);
    CHECK((compose(a, b).matrix() - a.matrix() * b.matrix()).norm() < 1e-12);
  }

  // associativity
  for (int i = 0; i < 50; ++i) {
    RigidTransform a = random_transform(rng), b = random_transform(rng),
                   c = random_transform(rng);
    CHECK((compose(compose(a, b), c).matrix() - compose(a, compose(b, c)).matrix()).norm() <
          1e-12);
  }
}

TEST_CASE("geodesic_angle") {
  std::mt19937_64 rng(13);
  Mat3 R = random_rotation(rng);
  CHECK(geodesic_angle(R, R) < 1e-7);  // acos near 1 amplifies rounding
  CHECK(geodesic_angle(Mat3::Identity(), Mat3::Identity()) == 0.0);

  CHECK(geodesic_angle(Mat3::Identity(), rodrigues_to_matrix(Vec3(0, M_PI, 0))) ==
        doctest::Approx(M_PI));

  std::uniform_real_distribution<double> angle(1e-4, M_PI - 1e-4);
  for (int i = 0; i < 100; ++i) {
    const double theta = angle(rng);
    Mat3 Rt = rodrigues_to_matrix(theta * random_unit_vector(rng));
    CHECK(geodesic_angle(Mat3::Identity(), Rt) == doctest::Approx(theta).epsilon(1e-10));
  }

  // symmetry and triangle inequality
  for (int i = 0; i < 100; ++i) {
    Mat3 a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
    CHECK(geodesic_angle(a, b) == doctest::Approx(geodesic_angle(b, a)).epsilon(1e-12));
    CHECK(geodesic_angle(a, c) <= geodesic_angle(a, b) + geodesic_angle(b, c) + 1e-9);
  }
}

TEST_CASE("weighted_rotation_mean") {
  std::mt19937_64 rng(17);

  Mat3 R = random_rotation(rng);
  CHECK((weighted_rotation_mean({R}, {1.0}) - R).norm() < 1e-12);
  CHECK((weighted_rotation_mean({R, R}, {0.3, 2.5}) - R).norm() < 1e-12);

  SUBCASE("midpoint of two rotations, grid-search verified") {
    Mat3 a = rodrigues_to_matrix(Vec3(0, 0, 0));
    Mat3 b = rodrigues_to_matrix(Vec3(0, 0, 10.0 * M_PI / 180.0));
    Mat3 m = weighted_rotation_mean({a, b}, {1.0, 1.0});
    Mat3 expect = rodrigues_to_matrix(Vec3(0, 0, 5.0 * M_PI / 180.0));
    CHECK((m - expect).norm() < 1e-12);
    Mat3 grid = pf_test::grid_search_two_rotation_mean(a, b, 1.0, 1.0, 0.001 * M_PI / 180.0);
    CHECK(geodesic_angle(m, grid) < 0.002 * M_PI / 180.0);
  }

  SUBCASE("output in SO(3) and cost no worse than inputs") {
    std::uniform_real_distribution<double> w(0.1, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Mat3> rots;
      std::vector<double> weights;
      for (int i = 0; i < 4; ++i) {
        rots.push_back(random_rotation(rng));
        weights.push_back(w(rng));
      }
      Mat3 m;
      try {
        m = weighted_rotation_mean(rots, weights);
      } catch (const DegenerateMean&) {
        continue;  // maximally spread random sets can legitimately degenerate
      }
      CHECK((m * m.transpose() - Mat3::Identity()).norm() < 1e-10);
      CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-10));
      auto cost = [&](const Mat3& R) {
        double c = 0;
        for (size_t i = 0; i < rots.size(); ++i) c += weights[i] * (R - rots[i]).squaredNorm();
        return c;
      };
      for (const auto& r : rots) CHECK(cost(m) <= cost(r) + 1e-12);

      // invariance to uniform weight scaling
      std::vector<double> scaled = weights;
      for (auto& x : scaled) x *= 7.5;
      CHECK((weighted_rotation_mean(rots, scaled) - m).norm() < 1e-10);
    }
  }

  SUBCASE("degenerate antipodal inputs") {
    Mat3 a = Mat3::Identity();
    Mat3 b = rodrigues_to_matrix(Vec3(M_PI, 0, 0));
    CHECK_THROWS_AS(weighted_rotation_mean({a, b}, {1.0, 1.0}), DegenerateMean);
  }
}

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "support.hpp"

using namespace coopscene;
using coopscene::test::unit_camera;
using coopscene::test::world_from_camera;

namespace {

void expect_mat_near(const Mat3& a, const Mat3& b, double tol) {
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(a.m[i], b.m[i], tol) << "entry " << i;
}

// Plain triple-loop product, independent of Mat3's operator*.
Mat3 multiply(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a.m[3 * i + k] * b.m[3 * k + j];
      r.m[3 * i + j] = s;
    }
  return r;
}

void expect_orthonormal(const Mat3& R, double tol) {
  expect_mat_near(multiply(R.transpose(), R), Mat3::identity(), tol);
  EXPECT_NEAR(determinant(R), 1.0, tol);
}

bool same_point_set(std::array<Vec3, 8> a, std::array<Vec3, 8> b, double tol) {
  for (const auto& p : a) {
    const bool found = std::any_of(b.begin(), b.end(), [&](const Vec3& q) { return norm(p - q) < tol; });
    if (!found) return false;
  }
  return true;
}

}  // namespace

TEST(RotationUp, ZeroIsIdentity) { expect_mat_near(rotation_up(0.0), Mat3::identity(), 0.0); }

TEST(RotationUp, QuarterTurnMapsXToY) {
  const Vec3 r = rotation_up(kPi / 2) * Vec3{1, 0, 0};
  EXPECT_NEAR(r.x, 0.0, 1e-15);
  EXPECT_NEAR(r.y, 1.0, 1e-15);
  EXPECT_NEAR(r.z, 0.0, 1e-15);
}

TEST(RotationUp, ComposesAdditively) {
  expect_mat_near(multiply(rotation_up(0.3), rotation_up(0.4)), rotation_up(0.7), 1e-12);
}

TEST(CameraRotation, ZeroIsIdentity) { expect_mat_near(camera_rotation(0.0, 0.0), Mat3::identity(), 0.0); }

TEST(CameraRotation, PurePitchIsOrthonormal) {
  const Mat3 R = camera_rotation(0.2, 0.0);
  const Mat3 expected{{1, 0, 0, 0, std::cos(0.2), -std::sin(0.2), 0, std::sin(0.2), std::cos(0.2)}};
  expect_mat_near(R, expected, 1e-15);
  expect_mat_near(multiply(R, R.transpose()), Mat3::identity(), 1e-12);
}

TEST(CameraRotation, RollAfterPitch) {
  expect_mat_near(camera_rotation(0.3, -0.2), multiply(rotation_z(-0.2), rotation_x(0.3)), 1e-15);
}

TEST(CameraRotation, RandomVectorsRoundTrip) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Mat3 R = camera_rotation(test::uniform(rng, -1, 1), test::uniform(rng, -1, 1));
    const Vec3 x = test::random_vec(rng, -10, 10);
    const Vec3 back = R.transpose() * (R * x);
    EXPECT_LT(norm(back - x), 1e-12);
  }
}

TEST(Rotations, OrthonormalForRandomAngles) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double a = test::uniform(rng, -10, 10), b = test::uniform(rng, -10, 10);
    expect_orthonormal(rotation_up(a), 1e-9);
    expect_orthonormal(camera_rotation(a, b), 1e-9);
  }
}

TEST(ComposeBoxCorners, UnitSignsInLexicographicOrder) {
  const auto c = compose_box_corners(OrientedBox3D{{0, 0, 0}, {2, 2, 2}, 0.0});
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(c[i].x, (i & 4) ? 1.0 : -1.0);
    EXPECT_EQ(c[i].y, (i & 2) ? 1.0 : -1.0);
    EXPECT_EQ(c[i].z, (i & 1) ? 1.0 : -1.0);
  }
}

TEST(ComposeBoxCorners, TranslationEquivariant) {
  const auto a = compose_box_corners(OrientedBox3D{{0, 0, 0}, {2, 2, 2}, 0.0});
  const auto b = compose_box_corners(OrientedBox3D{{5, 0, 0}, {2, 2, 2}, 0.0});
  for (int i = 0; i < 8; ++i) EXPECT_LT(norm(b[i] - (a[i] + Vec3{5, 0, 0})), 1e-15);
}

TEST(ComposeBoxCorners, QuarterTurnSwapsExtents) {
  const auto turned = compose_box_corners(OrientedBox3D{{0, 0, 0}, {2, 4, 2}, kPi / 2});
  const auto plain = compose_box_corners(OrientedBox3D{{0, 0, 0}, {4, 2, 2}, 0.0});
  // Oracle: rotate the local sign pattern by hand.
  for (int i = 0; i < 8; ++i) {
    const Vec3 local{(i & 4) ? 1.0 : -1.0, (i & 2) ? 2.0 : -2.0, (i & 1) ? 1.0 : -1.0};
    EXPECT_LT(norm(turned[i] - (rotation_up(kPi / 2) * local)), 1e-12);
  }
  EXPECT_TRUE(same_point_set(turned, plain, 1e-12));
}

TEST(ComposeBoxCorners, CentroidAndEdgeLengths) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const OrientedBox3D box{test::random_vec(rng, -5, 5), test::random_vec(rng, 0.1, 3), test::uniform(rng, -7, 7)};
    const auto c = compose_box_corners(box);
    Vec3 sum{};
    for (const auto& p : c) sum = sum + p;
    EXPECT_LT(norm((1.0 / 8.0) * sum - box.center), 1e-12);
    for (int i = 0; i < 8; ++i) {
      EXPECT_NEAR(norm(c[i ^ 4] - c[i]), box.size.x, 1e-12);
      EXPECT_NEAR(norm(c[i ^ 2] - c[i]), box.size.y, 1e-12);
      EXPECT_NEAR(norm(c[i ^ 1] - c[i]), box.size.z, 1e-12);
    }
  }
}

TEST(ComposeBoxCorners, HeadingPeriodic) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    OrientedBox3D box{test::random_vec(rng, -5, 5), test::random_vec(rng, 0.1, 3), test::uniform(rng, -4, 4)};
    const auto a = compose_box_corners(box);
    box.heading += kTwoPi;
    EXPECT_TRUE(same_point_set(a, compose_box_corners(box), 1e-9));
  }
}

TEST(ProjectPoint, PrincipalRay) {
  const Vec2 p = project_point(unit_camera(), world_from_camera({0, 0, 5}));
  EXPECT_NEAR(p.u, 0.0, 1e-15);
  EXPECT_NEAR(p.v, 0.0, 1e-15);
}

TEST(ProjectPoint, SimilarTriangles) {
  const Vec2 p = project_point(unit_camera(), world_from_camera({1, 0, 5}));
  EXPECT_NEAR(p.u, 0.2, 1e-15);
  EXPECT_NEAR(p.v, 0.0, 1e-15);
}

TEST(ProjectPoint, ImageVGrowsDownward) {
  const Vec2 p = project_point(unit_camera(), Vec3{0, 5, -1});
  EXPECT_NEAR(p.v, 0.2, 1e-15);
}

TEST(ProjectPoint, BehindCameraThrows) {
  try {
    project_point(unit_camera(), world_from_camera({0, 0, -1}));
    FAIL() << "expected NonPositiveDepth";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositiveDepth);
  }
}

TEST(ProjectPoint, IntrinsicsAndTranslation) {
  Camera cam;
  cam.K = make_intrinsics(500, 400, 320, 240);
  cam.T = {1, 2, 3};
  const Vec3 x = cam.T + world_from_camera({0.5, -0.25, 4});
  const Vec2 p = project_point(cam, x);
  EXPECT_NEAR(p.u, 320 + 500 * 0.5 / 4, 1e-12);
  EXPECT_NEAR(p.v, 240 - 400 * 0.25 / 4, 1e-12);
}

TEST(ProjectBox, UnitCubeNearFaceDominates) {
  const OrientedBox3D cube{world_from_camera({0, 0, 5}), {1, 1, 1}, 0.0};
  const Box2D b = project_box_to_2d(unit_camera(), cube);
  // Hand projection of the eight corners: |u|, |v| peak at 0.5 / 4.5.
  const double e = 0.5 / 4.5;
  EXPECT_NEAR(b.min.u, -e, 1e-12);
  EXPECT_NEAR(b.min.v, -e, 1e-12);
  EXPECT_NEAR(b.max.u, e, 1e-12);
  EXPECT_NEAR(b.max.v, e, 1e-12);
  EXPECT_NEAR(e, 0.1111, 1e-4);
}

TEST(ProjectBox, DegenerateBoxCollapsesToCenter) {
  const Vec3 c = world_from_camera({0.3, -0.2, 5});
  const Box2D b = project_box_to_2d(unit_camera(), OrientedBox3D{c, {1e-9, 1e-9, 1e-9}, 0.4});
  const Vec2 p = project_point(unit_camera(), c);
  EXPECT_NEAR(b.min.u, p.u, 1e-9);
  EXPECT_NEAR(b.max.u, p.u, 1e-9);
  EXPECT_NEAR(b.min.v, p.v, 1e-9);
  EXPECT_NEAR(b.max.v, p.v, 1e-9);
}

TEST(ProjectBox, TranslationParallelToImageMovesBoxSameWay) {
  Camera cam;
  cam.K = make_intrinsics(520, 520, 320, 240);
  cam.phi = 0.2;
  OrientedBox3D box{{0.0, 4.0, 0.0}, {1.0, 0.8, 0.6}, 0.5};
  Box2D prev = project_box_to_2d(cam, box);
  // Camera-frame x axis expressed in the world.
  const Vec3 right = cam.rotation().transpose() * Vec3{1, 0, 0};
  for (int i = 0; i < 20; ++i) {
    box.center = box.center + 0.05 * right;
    const Box2D next = project_box_to_2d(cam, box);
    EXPECT_GT(next.min.u, prev.min.u);
    EXPECT_GT(next.max.u, prev.max.u);
    prev = next;
  }
}

TEST(ProjectBox, CornerBehindCameraThrows) {
  const OrientedBox3D box{world_from_camera({0, 0, 0.4}), {1, 1, 1}, 0.0};
  EXPECT_THROW(project_box_to_2d(unit_camera(), box), Error);
}

TEST(ProjectBox, HullContainsProjectedCenter) {
  std::mt19937_64 rng(8);
  Camera cam;
  cam.K = make_intrinsics(520, 520, 320, 240);
  for (int t = 0; t < 1000; ++t) {
    cam.phi = test::uniform(rng, -0.5, 0.5);
    cam.psi = test::uniform(rng, -0.3, 0.3);
    const Vec3 c_cam{test::uniform(rng, -2, 2), test::uniform(rng, -2, 2), test::uniform(rng, 4, 10)};
    const OrientedBox3D box{cam.rotation().transpose() * c_cam, test::random_vec(rng, 0.1, 2), test::uniform(rng, -4, 4)};
    const Box2D b = project_box_to_2d(cam, box);
    const Vec2 p = project_point(cam, box.center);
    EXPECT_LE(b.min.u, p.u);
    EXPECT_GE(b.max.u, p.u);
    EXPECT_LE(b.min.v, p.v);
    EXPECT_GE(b.max.v, p.v);
  }
}

TEST(Angles, NormalizeToHalfOpenRange) {
  EXPECT_DOUBLE_EQ(normalize_angle(kPi), -kPi);
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), -kPi);
  EXPECT_NEAR(normalize_angle(3 * kTwoPi + 0.5), 0.5, 1e-12);
  EXPECT_NEAR(normalize_angle(-kTwoPi - 0.5), -0.5, 1e-12);
}

TEST(Contains, YawedBox) {
  const OrientedBox3D box{{1, 1, 0}, {2, 0.5, 1}, kPi / 2};
  EXPECT_TRUE(contains(box, {1.0, 1.9, 0.0}));   // along world y the long side lies
  EXPECT_FALSE(contains(box, {1.9, 1.0, 0.0}));
}

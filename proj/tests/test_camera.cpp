#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "evgs/camera.hpp"
#include "evgs/errors.hpp"
#include "evgs/rng.hpp"

using evgs::Intrinsics;
using evgs::Pose;
using evgs::Trajectory;

namespace {

Pose random_pose(evgs::Rng& rng) {
  Pose p;
  p.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal())
                   .normalized();
  p.translation = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
  return p;
}

const Intrinsics kK{100.0, 100.0, 32.0, 24.0, 64, 48};

}  // namespace

TEST_CASE("identity pose leaves points unchanged") {
  const Eigen::Vector3d p(1.5, -2.0, 3.0);
  CHECK((evgs::world_to_camera(Pose{}, p) - p).norm() == 0.0);
}

TEST_CASE("pure translation moves the origin behind the camera") {
  Pose pose;
  pose.translation = {0, 0, -5};
  const Eigen::Vector3d out = evgs::world_to_camera(pose, Eigen::Vector3d::Zero());
  CHECK(out == Eigen::Vector3d(0, 0, -5));
  CHECK(evgs::behind_camera(out));
}

TEST_CASE("pose composition matches sequential application") {
  evgs::Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    const Eigen::Vector3d x(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Eigen::Vector3d sequential = evgs::world_to_camera(a, evgs::world_to_camera(b, x));
    const Eigen::Vector3d composed = evgs::world_to_camera(evgs::compose(a, b), x);
    CHECK((sequential - composed).norm() < 1e-12);
  }
}

TEST_CASE("on-axis projection jacobian is diagonal") {
  const auto J = evgs::projection_jacobian({0, 0, 10}, kK);
  CHECK(J(0, 0) == 10.0);
  CHECK(J(1, 1) == 10.0);
  CHECK(J(0, 1) == 0.0);
  CHECK(J(0, 2) == 0.0);
  CHECK(J(1, 0) == 0.0);
  CHECK(J(1, 2) == 0.0);
}

TEST_CASE("projection jacobian matches finite differences") {
  evgs::Rng rng(32);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d p(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(1, 10));
    const auto J = evgs::projection_jacobian(p, kK);
    for (int axis = 0; axis < 3; ++axis) {
      Eigen::Vector3d lo = p, hi = p;
      lo[axis] -= h;
      hi[axis] += h;
      const Eigen::Vector2d fd =
          (evgs::project_point(hi, kK) - evgs::project_point(lo, kK)) / (2 * h);
      for (int r = 0; r < 2; ++r) {
        const double denom = std::max(std::abs(fd[r]), 1.0);
        CHECK(std::abs(J(r, axis) - fd[r]) / denom < 1e-5);
      }
    }
  }
}

TEST_CASE("doubling depth halves the on-axis jacobian diagonal") {
  const auto J1 = evgs::projection_jacobian({0, 0, 5}, kK);
  const auto J2 = evgs::projection_jacobian({0, 0, 10}, kK);
  CHECK(J2(0, 0) == doctest::Approx(J1(0, 0) / 2).epsilon(1e-12));
  CHECK(J2(1, 1) == doctest::Approx(J1(1, 1) / 2).epsilon(1e-12));
}

TEST_CASE("points at or behind the near plane are rejected") {
  CHECK_THROWS_AS(evgs::projection_jacobian({0, 0, 0.005}, kK), std::domain_error);
  CHECK_THROWS_AS(evgs::projection_jacobian({0, 0, -1}, kK), std::domain_error);
}

TEST_CASE("camera axis projects to the principal point") {
  const Eigen::Vector2d uv = evgs::project_point({0, 0, 3}, kK);
  CHECK(uv.x() == kK.cx);
  CHECK(uv.y() == kK.cy);
}

namespace {

Trajectory two_keyframe_z_rotation() {
  Trajectory traj;
  Pose a;  // identity
  Pose b;
  b.rotation = Eigen::Quaterniond(
      Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()));
  traj.keyframes = {{0, a}, {1000, b}};
  return traj;
}

}  // namespace

TEST_CASE("pose_at returns keyframe poses exactly at their timestamps") {
  const Trajectory traj = two_keyframe_z_rotation();
  const Pose at0 = evgs::pose_at(traj, 0);
  CHECK(at0.rotation.angularDistance(traj.keyframes[0].second.rotation) == 0.0);
  const Pose at1000 = evgs::pose_at(traj, 1000);
  CHECK(at1000.rotation.angularDistance(traj.keyframes[1].second.rotation) == 0.0);
}

TEST_CASE("slerp midpoint of a 90 degree rotation is 45 degrees") {
  const Trajectory traj = two_keyframe_z_rotation();
  const Pose mid = evgs::pose_at(traj, 500);
  const Eigen::AngleAxisd aa(mid.rotation);
  CHECK(std::abs(aa.angle() - std::numbers::pi / 4) < 1e-9);
  CHECK((aa.axis() - Eigen::Vector3d::UnitZ()).norm() < 1e-9);
}

TEST_CASE("interpolated rotations stay unit norm") {
  evgs::Rng rng(33);
  Trajectory traj;
  for (int i = 0; i < 10; ++i) traj.keyframes.emplace_back(i * 100, random_pose(rng));
  for (int i = 0; i < 1000; ++i) {
    const int64_t t = static_cast<int64_t>(rng.uniform_index(901));
    CHECK(std::abs(evgs::pose_at(traj, t).rotation.norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("pose_at rejects out-of-span queries") {
  const Trajectory traj = two_keyframe_z_rotation();
  CHECK_THROWS_AS(evgs::pose_at(traj, -1), std::out_of_range);
  CHECK_THROWS_AS(evgs::pose_at(traj, 1001), std::out_of_range);
}

TEST_CASE("slerp takes the shorter arc") {
  Trajectory traj;
  Pose a, b;
  // The endpoint quaternion is the sign-flipped copy of a 90-degree z
  // rotation; interpolation must still pass through 45 degrees, not 135.
  const double half = std::numbers::pi / 4;
  b.rotation = Eigen::Quaterniond(-std::cos(half), 0, 0, -std::sin(half));
  traj.keyframes = {{0, a}, {1000, b}};
  const Pose mid = evgs::pose_at(traj, 500);
  CHECK(std::abs(mid.rotation.angularDistance(a.rotation) - half) < 1e-9);
}

TEST_CASE("trajectory json round-trips") {
  evgs::Rng rng(34);
  Trajectory traj;
  for (int i = 0; i < 5; ++i) traj.keyframes.emplace_back(i * 250 + 7, random_pose(rng));
  const std::string path = "io_test_traj.json";
  evgs::save_trajectory(path, kK, traj);
  const auto [K2, traj2] = evgs::load_trajectory(path);
  CHECK(K2.fx == kK.fx);
  CHECK(K2.fy == kK.fy);
  CHECK(K2.cx == kK.cx);
  CHECK(K2.cy == kK.cy);
  CHECK(K2.width == kK.width);
  CHECK(K2.height == kK.height);
  REQUIRE(traj2.keyframes.size() == traj.keyframes.size());
  for (std::size_t i = 0; i < traj.keyframes.size(); ++i) {
    CHECK(traj2.keyframes[i].first == traj.keyframes[i].first);
    CHECK(traj2.keyframes[i].second.rotation.angularDistance(
              traj.keyframes[i].second.rotation) < 1e-12);
    CHECK((traj2.keyframes[i].second.translation -
           traj.keyframes[i].second.translation).norm() < 1e-12);
  }
  std::remove(path.c_str());
}

TEST_CASE("trajectory validation rejects bad structures") {
  Trajectory one;
  one.keyframes = {{0, Pose{}}};
  CHECK_THROWS_AS(one.validate(), evgs::ValidationError);
  Trajectory dup;
  dup.keyframes = {{0, Pose{}}, {0, Pose{}}};
  CHECK_THROWS_AS(dup.validate(), evgs::ValidationError);
}

TEST_CASE("intrinsics validation rejects degenerate values") {
  Intrinsics bad = kK;
  bad.fx = 0.0;
  CHECK_THROWS_AS(bad.validate(), evgs::ValidationError);
  bad = kK;
  bad.cx = 64.0;
  CHECK_THROWS_AS(bad.validate(), evgs::ValidationError);
}

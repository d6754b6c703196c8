#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace evgs {

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws ValidationError if focal lengths are nonpositive or the principal
  /// point lies outside the sensor.
  void validate() const;
};

/// World-to-camera transform; the camera looks along +z.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

/// Poses keyed by strictly increasing integer-microsecond timestamps.
struct Trajectory {
  std::vector<std::pair<int64_t, Pose>> keyframes;

  void validate() const;
  int64_t t_min() const { return keyframes.front().first; }
  int64_t t_max() const { return keyframes.back().first; }
};

Eigen::Vector3d world_to_camera(const Pose& pose, const Eigen::Vector3d& point);

inline bool behind_camera(const Eigen::Vector3d& cam_point) { return cam_point.z() <= 0.0; }

/// apply(compose(outer, inner), x) == apply(outer, apply(inner, x)).
Pose compose(const Pose& outer, const Pose& inner);

/// Pixel coordinates of a camera-space point (z > 0).
Eigen::Vector2d project_point(const Eigen::Vector3d& cam_point, const Intrinsics& K);

/// Throws std::domain_error when z <= near_plane; callers cull first.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& cam_point,
                                                const Intrinsics& K,
                                                double near_plane = 0.01);

/// Slerp rotation (shorter arc) and lerp translation between the bracketing
/// keyframes; exact keyframe timestamps return the stored pose. Throws
/// std::out_of_range outside the keyframe span.
Pose pose_at(const Trajectory& trajectory, int64_t t);

// Trajectory file IO (JSON, world-to-camera convention marked in the file).
void save_trajectory(const std::string& path, const Intrinsics& K,
                     const Trajectory& trajectory);
std::pair<Intrinsics, Trajectory> load_trajectory(const std::string& path);

}  // namespace evgs

#include "evgs/camera.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "evgs/errors.hpp"

namespace evgs {

using nlohmann::json;

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw ValidationError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw ValidationError("intrinsics: resolution must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw ValidationError("intrinsics: principal point outside the sensor");
}

void Trajectory::validate() const {
  if (keyframes.size() < 2)
    throw ValidationError("trajectory: needs at least 2 keyframes");
  for (std::size_t i = 0; i < keyframes.size(); ++i) {
    if (i > 0 && keyframes[i].first <= keyframes[i - 1].first)
      throw ValidationError("trajectory: keyframe timestamps must strictly increase");
    if (std::abs(keyframes[i].second.rotation.norm() - 1.0) > 1e-9)
      throw ValidationError("trajectory: keyframe " + std::to_string(i) +
                            " quaternion not normalized");
  }
}

Eigen::Vector3d world_to_camera(const Pose& pose, const Eigen::Vector3d& point) {
  return pose.rotation * point + pose.translation;
}

Pose compose(const Pose& outer, const Pose& inner) {
  Pose out;
  out.rotation = (outer.rotation * inner.rotation).normalized();
  out.translation = outer.rotation * inner.translation + outer.translation;
  return out;
}

Eigen::Vector2d project_point(const Eigen::Vector3d& cam_point, const Intrinsics& K) {
  const double z = cam_point.z();
  return {K.fx * cam_point.x() / z + K.cx, K.fy * cam_point.y() / z + K.cy};
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Eigen::Vector3d& cam_point,
                                                const Intrinsics& K,
                                                double near_plane) {
  const double z = cam_point.z();
  if (z <= near_plane)
    throw std::domain_error("projection_jacobian: point behind the near plane");
  Eigen::Matrix<double, 2, 3> J;
  J << K.fx / z, 0.0, -K.fx * cam_point.x() / (z * z),
       0.0, K.fy / z, -K.fy * cam_point.y() / (z * z);
  return J;
}

Pose pose_at(const Trajectory& trajectory, int64_t t) {
  const auto& kf = trajectory.keyframes;
  if (kf.empty() || t < kf.front().first || t > kf.back().first)
    throw std::out_of_range("pose_at: t=" + std::to_string(t) +
                            " outside the keyframe span");
  const auto it = std::lower_bound(
      kf.begin(), kf.end(), t,
      [](const std::pair<int64_t, Pose>& k, int64_t v) { return k.first < v; });
  if (it->first == t) return it->second;
  const auto& [t1, p1] = *(it - 1);
  const auto& [t2, p2] = *it;
  const double u = static_cast<double>(t - t1) / static_cast<double>(t2 - t1);
  Pose out;
  out.rotation = p1.rotation.slerp(u, p2.rotation).normalized();
  out.translation = (1.0 - u) * p1.translation + u * p2.translation;
  return out;
}

void save_trajectory(const std::string& path, const Intrinsics& K,
                     const Trajectory& trajectory) {
  K.validate();
  trajectory.validate();
  json j;
  j["convention"] = "w2c";
  j["intrinsics"] = {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy},
                     {"width", K.width}, {"height", K.height}};
  json frames = json::array();
  for (const auto& [t, pose] : trajectory.keyframes) {
    frames.push_back({{"t_us", t},
                      {"qw", pose.rotation.w()}, {"qx", pose.rotation.x()},
                      {"qy", pose.rotation.y()}, {"qz", pose.rotation.z()},
                      {"tx", pose.translation.x()}, {"ty", pose.translation.y()},
                      {"tz", pose.translation.z()}});
  }
  j["keyframes"] = std::move(frames);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open trajectory file for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed for trajectory file: " + path);
}

std::pair<Intrinsics, Trajectory> load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trajectory file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("trajectory file " + path + ": " + e.what());
  }
  try {
    if (j.at("convention").get<std::string>() != "w2c")
      throw ParseError("trajectory file " + path + ": unsupported convention '" +
                       j.at("convention").get<std::string>() + "'");
    const json& ji = j.at("intrinsics");
    Intrinsics K;
    K.fx = ji.at("fx").get<double>();
    K.fy = ji.at("fy").get<double>();
    K.cx = ji.at("cx").get<double>();
    K.cy = ji.at("cy").get<double>();
    K.width = ji.at("width").get<int>();
    K.height = ji.at("height").get<int>();
    Trajectory traj;
    for (const json& jf : j.at("keyframes")) {
      Pose pose;
      pose.rotation = Eigen::Quaterniond(jf.at("qw").get<double>(),
                                         jf.at("qx").get<double>(),
                                         jf.at("qy").get<double>(),
                                         jf.at("qz").get<double>())
                          .normalized();
      pose.translation = {jf.at("tx").get<double>(), jf.at("ty").get<double>(),
                          jf.at("tz").get<double>()};
      traj.keyframes.emplace_back(jf.at("t_us").get<int64_t>(), pose);
    }
    K.validate();
    traj.validate();
    return {K, traj};
  } catch (const json::exception& e) {
    throw ParseError("trajectory file " + path + ": " + e.what());
  }
}

}  // namespace evgs

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "evgs/camera.hpp"
#include "evgs/event_io.hpp"
#include "evgs/image.hpp"
#include "evgs/scene.hpp"

namespace evgs {

struct SimConfig {
  double threshold = 0.1;     // log-luminance contrast step per event
  double log_floor = 1e-3;    // epsilon inside the luminance log
  std::uint64_t seed = 0;     // reserved for future noise models
};

struct OrbitSpec {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 3.2;
  double elevation_rad = 0.45;
  int n_frames = 200;
  std::int64_t duration_us = 2000000;
  std::int64_t t_start_us = 0;
};

struct OrbitRender {
  std::vector<std::pair<std::int64_t, Image>> frames;  // (t_us, rendered image)
  Trajectory trajectory;
};

// Cameras on a circle around spec.center at the given elevation, all looking
// at the center (world z up), uniform in angle and time. Frame i sits at
// angle 2*pi*i/n and time t_start + round(i*duration/n); a full revolution
// spans [0, 360) with no wrapped duplicate of the first pose.
OrbitRender render_orbit(const GaussianScene& scene, const OrbitSpec& spec,
                         const Intrinsics& intrinsics);

// Threshold-crossing event model. Each pixel tracks a reference log-luminance
// starting at frame 0; whenever a new frame moves the log-luminance at least
// one threshold away, events fire with timestamps spread uniformly across the
// frame interval in crossing order. Output is sorted by time with ties broken
// by (y, x, emission order).
EventStream simulate_events(const std::vector<std::pair<std::int64_t, Image>>& frames,
                            const SimConfig& config);

// Fixed eight-gaussian scene on a mid-gray background, used by the packaged
// demo pipeline and the end-to-end tests.
GaussianScene make_demo_scene();

Intrinsics demo_intrinsics();
OrbitSpec demo_orbit();

}  // namespace evgs

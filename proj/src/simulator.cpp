#include "evgs/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Geometry>

#include "evgs/render.hpp"

namespace evgs {
namespace {

Pose look_at_pose(const Eigen::Vector3d& position, const Eigen::Vector3d& target) {
  const Eigen::Vector3d forward = (target - position).normalized();
  Eigen::Vector3d lateral = forward.cross(Eigen::Vector3d::UnitZ());
  if (lateral.squaredNorm() < 1e-18) lateral = forward.cross(Eigen::Vector3d::UnitY());
  const Eigen::Vector3d x_cam = lateral.normalized();
  const Eigen::Vector3d y_cam = forward.cross(x_cam);
  Eigen::Matrix3d world_to_cam;
  world_to_cam.row(0) = x_cam;
  world_to_cam.row(1) = y_cam;
  world_to_cam.row(2) = forward;
  Pose pose;
  pose.rotation = Eigen::Quaterniond(world_to_cam).normalized();
  pose.translation = -(world_to_cam * position);
  return pose;
}

double log_luminance(const Image& img, int y, int x, double floor) {
  double lum = img.at(y, x, 0);
  if (img.channels == 3)
    lum = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  return std::log(lum + floor);
}

}  // namespace

OrbitRender render_orbit(const GaussianScene& scene, const OrbitSpec& spec,
                         const Intrinsics& intrinsics) {
  if (spec.n_frames < 2) throw std::invalid_argument("render_orbit: needs at least 2 frames");
  if (!(spec.radius > 0.0)) throw std::invalid_argument("render_orbit: radius must be positive");
  if (spec.duration_us <= 0) throw std::invalid_argument("render_orbit: duration must be positive");
  intrinsics.validate();
  scene.validate();

  OrbitRender out;
  out.frames.reserve(spec.n_frames);
  const double cos_el = std::cos(spec.elevation_rad);
  const double sin_el = std::sin(spec.elevation_rad);
  for (int i = 0; i < spec.n_frames; ++i) {
    const double angle = 2.0 * M_PI * i / spec.n_frames;
    const Eigen::Vector3d position =
        spec.center + spec.radius * Eigen::Vector3d(cos_el * std::cos(angle),
                                                    cos_el * std::sin(angle), sin_el);
    const Pose pose = look_at_pose(position, spec.center);
    const std::int64_t t =
        spec.t_start_us +
        static_cast<std::int64_t>(std::llround(static_cast<double>(i) * spec.duration_us /
                                               spec.n_frames));
    if (!out.frames.empty() && t <= out.frames.back().first)
      throw std::invalid_argument("render_orbit: duration too short for distinct frame times");
    out.trajectory.keyframes.emplace_back(t, pose);
    out.frames.emplace_back(t, render(scene, pose, intrinsics).image);
  }
  return out;
}

EventStream simulate_events(const std::vector<std::pair<std::int64_t, Image>>& frames,
                            const SimConfig& config) {
  if (frames.size() < 2) throw std::invalid_argument("simulate_events: needs at least 2 frames");
  if (!(config.threshold > 0.0))
    throw std::invalid_argument("simulate_events: threshold must be positive");
  const Image& first = frames.front().second;
  for (std::size_t f = 1; f < frames.size(); ++f) {
    if (frames[f].first <= frames[f - 1].first)
      throw std::invalid_argument("simulate_events: frame timestamps must be strictly increasing");
    if (!frames[f].second.same_shape(first))
      throw std::invalid_argument("simulate_events: frames share one resolution");
  }

  const int height = first.height;
  const int width = first.width;
  const double delta = config.threshold;

  struct Emission {
    std::int64_t t;
    std::uint16_t x, y;
    std::int8_t p;
    std::uint32_t seq;
  };
  std::vector<Emission> emissions;
  std::vector<double> reference(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      reference[static_cast<std::size_t>(y) * width + x] =
          log_luminance(first, y, x, config.log_floor);

  std::uint32_t seq = 0;
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const std::int64_t t_prev = frames[f - 1].first;
    const std::int64_t t_frame = frames[f].first;
    const double span = static_cast<double>(t_frame - t_prev);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const std::size_t px = static_cast<std::size_t>(y) * width + x;
        const double v = log_luminance(frames[f].second, y, x, config.log_floor);
        const double diff = v - reference[px];
        const auto count = static_cast<std::int64_t>(std::floor(std::abs(diff) / delta));
        if (count == 0) continue;
        const std::int8_t polarity = diff > 0.0 ? 1 : -1;
        for (std::int64_t j = 1; j <= count; ++j) {
          const std::int64_t t =
              t_prev + static_cast<std::int64_t>(std::llround(j * span / (count + 1.0)));
          emissions.push_back({t, static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y),
                               polarity, seq++});
        }
        reference[px] += polarity * count * delta;
      }
  }

  std::sort(emissions.begin(), emissions.end(), [](const Emission& a, const Emission& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.seq < b.seq;
  });

  EventStream stream;
  stream.width = width;
  stream.height = height;
  stream.threshold = delta;
  stream.events.reserve(emissions.size());
  for (const Emission& e : emissions) stream.events.push_back({e.t, e.x, e.y, e.p});
  stream.validate();
  return stream;
}

GaussianScene make_demo_scene() {
  struct Spec {
    double px, py, pz;
    double sx, sy, sz;
    double qw, qx, qy, qz;
    double opacity;
    double r, g, b;
  };
  static const Spec specs[8] = {
      {-0.45, -0.45, -0.40, 0.20, 0.16, 0.16, 1.00, 0.00, 0.00, 0.00, 0.92, 0.95, 0.15, 0.10},
      {0.50, -0.42, -0.38, 0.14, 0.22, 0.14, 0.92, 0.38, 0.00, 0.00, 0.88, 0.10, 0.85, 0.20},
      {-0.42, 0.48, -0.42, 0.16, 0.16, 0.24, 0.88, 0.00, 0.47, 0.00, 0.90, 0.15, 0.25, 0.95},
      {0.44, 0.46, -0.36, 0.18, 0.13, 0.18, 0.95, 0.00, 0.00, 0.31, 0.85, 0.95, 0.90, 0.12},
      {-0.48, -0.40, 0.42, 0.15, 0.19, 0.15, 0.90, 0.30, 0.30, 0.00, 0.93, 0.90, 0.20, 0.88},
      {0.46, -0.46, 0.40, 0.21, 0.15, 0.13, 0.86, 0.00, 0.36, 0.36, 0.87, 0.12, 0.88, 0.85},
      {-0.40, 0.44, 0.46, 0.13, 0.17, 0.20, 0.93, 0.26, 0.00, 0.26, 0.91, 0.98, 0.60, 0.15},
      {0.42, 0.42, 0.44, 0.17, 0.17, 0.17, 1.00, 0.00, 0.00, 0.00, 0.83, 0.25, 0.25, 0.30},
  };
  GaussianScene scene;
  scene.sh_degree = 0;
  scene.background = Eigen::Vector3d(0.5, 0.5, 0.5);
  const double dc_basis = sh_basis(0, Eigen::Vector3d::UnitZ())[0];
  for (const Spec& s : specs) {
    Gaussian g;
    g.position = Eigen::Vector3d(s.px, s.py, s.pz);
    g.log_scale = Eigen::Vector3d(std::log(s.sx), std::log(s.sy), std::log(s.sz));
    g.rotation = Eigen::Vector4d(s.qw, s.qx, s.qy, s.qz).normalized();
    g.opacity_logit = logit(s.opacity);
    g.color_coeffs = {Eigen::Vector3d((s.r - 0.5) / dc_basis, (s.g - 0.5) / dc_basis,
                                      (s.b - 0.5) / dc_basis)};
    scene.gaussians.push_back(g);
  }
  scene.validate();
  return scene;
}

Intrinsics demo_intrinsics() {
  Intrinsics k;
  k.fx = 70.0;
  k.fy = 70.0;
  k.cx = 32.0;
  k.cy = 32.0;
  k.width = 64;
  k.height = 64;
  return k;
}

OrbitSpec demo_orbit() { return OrbitSpec{}; }

}  // namespace evgs

#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "evgs/camera.hpp"
#include "evgs/image.hpp"
#include "evgs/scene.hpp"

namespace evgs {

struct RenderOptions {
  double near_plane = 0.01;
  double alpha_clamp = 0.99;
  double alpha_skip = 1.0 / 255.0;
  /// Early per-pixel termination once transmittance drops below this value;
  /// 0 keeps every contribution (the default, matching the gradient-check
  /// tolerance; enabling it truncates both passes identically).
  double transmittance_stop = 0.0;
};

/// A Gaussian after projection: image-plane footprint plus everything the
/// per-pixel composite needs.
struct Splat2D {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov2d = Eigen::Matrix2d::Zero();  // after dilation
  Eigen::Matrix2d inv_cov2d = Eigen::Matrix2d::Zero();
  double depth = 0.0;
  double base_opacity = 0.0;
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  Eigen::Vector3d view_dir = Eigen::Vector3d::Zero();  // unit, camera to mean
  double bin_radius = 0.0;  // pixel radius beyond which alpha < the skip level
  std::size_t source = 0;
};

/// EWA projection of one Gaussian; nullopt when culled (behind the near
/// plane, more than 3 projected standard deviations outside the image, or
/// too transparent to ever pass the alpha skip).
std::optional<Splat2D> project_gaussian(const Gaussian& g, std::size_t source,
                                        int sh_degree, const Pose& pose,
                                        const Intrinsics& K,
                                        const RenderOptions& opts = {});

struct RenderResult {
  Image image;                  // height x width x 3, values in [0,1]
  std::vector<Splat2D> splats;  // ascending depth, ties by source index
  std::vector<std::vector<int32_t>> row_bins;  // splat list indices per row
};

RenderResult render(const GaussianScene& scene, const Pose& pose,
                    const Intrinsics& K, const RenderOptions& opts = {});

struct ParamGradients {
  std::vector<Eigen::Vector3d> position;
  std::vector<Eigen::Vector3d> log_scale;
  std::vector<Eigen::Vector4d> rotation;
  std::vector<double> opacity_logit;
  std::vector<std::vector<Eigen::Vector3d>> color_coeffs;
  // Density-control statistics: per-render-call accumulated image-plane
  // positional gradient norm and how many calls saw the Gaussian.
  std::vector<double> accum_mean2d_grad_norm;
  std::vector<int> visible_count;

  static ParamGradients zeros_like(const GaussianScene& scene);
  void add(const ParamGradients& other);
  void check_finite() const;  // throws with the offending Gaussian index
};

/// Exact adjoint of render: pulls dL/dImage back onto every Gaussian
/// parameter. `forward` must come from render() on the same inputs.
ParamGradients render_backward(const GaussianScene& scene, const Pose& pose,
                               const Intrinsics& K, const RenderResult& forward,
                               const Image& dL_dimage,
                               const RenderOptions& opts = {});

}  // namespace evgs

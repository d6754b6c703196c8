#pragma once

// Central finite-difference verification of render_backward, shared by the
// renderer unit tests and the acceptance suite.

#include <cmath>
#include <cstddef>

#include "evgs/render.hpp"

#include "evgs/rng.hpp"

namespace evgs::testing {

/// A small cluster inside the frustum of an identity-pose camera, with every
/// parameter kept away from the clamp boundaries so finite differences stay
/// informative.
inline GaussianScene random_probe_scene(uint64_t seed, int n_gaussians,
                                        int sh_degree) {
  Rng rng = substream(seed, "grad-probe");
  GaussianScene scene;
  scene.sh_degree = sh_degree;
  scene.background = {0.1, 0.15, 0.2};
  const std::size_t n_basis = static_cast<std::size_t>(sh_basis_count(sh_degree));
  for (int i = 0; i < n_gaussians; ++i) {
    Gaussian g;
    g.position = {rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(2.0, 3.5)};
    for (int a = 0; a < 3; ++a) g.log_scale[a] = std::log(rng.uniform(0.05, 0.35));
    Eigen::Vector4d q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    g.rotation = q / q.norm();
    g.opacity_logit = rng.uniform(-1.5, 1.5);
    g.color_coeffs.resize(n_basis);
    g.color_coeffs[0] = {rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2),
                         rng.uniform(-1.2, 1.2)};
    for (std::size_t b = 1; b < n_basis; ++b)
      g.color_coeffs[b] = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                           rng.uniform(-0.3, 0.3)};
    scene.gaussians.push_back(g);
  }
  return scene;
}

inline Image random_weight_image(uint64_t seed, int height, int width) {
  Rng rng = substream(seed, "grad-weights");
  Image w(height, width, 3);
  for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
  return w;
}

struct GradCheckStats {
  std::size_t total = 0;
  std::size_t passed = 0;
  double worst_rel = 0.0;

  double pass_fraction() const {
    return total == 0 ? 1.0 : static_cast<double>(passed) / static_cast<double>(total);
  }
};

inline double render_loss(const GaussianScene& scene, const Pose& pose,
                          const Intrinsics& K, const Image& weights) {
  const RenderResult r = render(scene, pose, K);
  double loss = 0.0;
  for (std::size_t i = 0; i < weights.data.size(); ++i)
    loss += weights.data[i] * r.image.data[i];
  return loss;
}

/// Checks every parameter of every Gaussian against central differences of
/// the weighted-pixel-sum loss. A parameter passes when the relative error is
/// below rel_tol, or both values are below abs_tol in magnitude.
inline GradCheckStats check_render_gradients(const GaussianScene& scene,
                                             const Pose& pose, const Intrinsics& K,
                                             const Image& weights, double h = 1e-4,
                                             double rel_tol = 1e-3,
                                             double abs_tol = 1e-6) {
  const RenderResult fwd = render(scene, pose, K);
  const ParamGradients grads = render_backward(scene, pose, K, fwd, weights);

  GradCheckStats stats;
  const auto check = [&](double analytic, double fd) {
    ++stats.total;
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    if (std::abs(analytic) < abs_tol && std::abs(fd) < abs_tol) {
      ++stats.passed;
      return;
    }
    const double rel = std::abs(analytic - fd) / scale;
    stats.worst_rel = std::max(stats.worst_rel, rel);
    if (rel < rel_tol) ++stats.passed;
  };

  GaussianScene probe = scene;
  const auto fd_for = [&](double* slot) {
    const double saved = *slot;
    *slot = saved + h;
    const double hi = render_loss(probe, pose, K, weights);
    *slot = saved - h;
    const double lo = render_loss(probe, pose, K, weights);
    *slot = saved;
    return (hi - lo) / (2.0 * h);
  };

  for (std::size_t i = 0; i < scene.size(); ++i) {
    Gaussian& g = probe.gaussians[i];
    for (int a = 0; a < 3; ++a)
      check(grads.position[i][a], fd_for(&g.position[a]));
    for (int a = 0; a < 3; ++a)
      check(grads.log_scale[i][a], fd_for(&g.log_scale[a]));
    for (int a = 0; a < 4; ++a)
      check(grads.rotation[i][a], fd_for(&g.rotation[a]));
    check(grads.opacity_logit[i], fd_for(&g.opacity_logit));
    for (std::size_t b = 0; b < g.color_coeffs.size(); ++b)
      for (int ch = 0; ch < 3; ++ch)
        check(grads.color_coeffs[i][b][ch], fd_for(&g.color_coeffs[b][ch]));
  }
  return stats;
}

}  // namespace evgs::testing

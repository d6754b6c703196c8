#include "evgs/render.hpp"

#include <algorithm>
#include <cmath>

#include "evgs/errors.hpp"
#include "evgs/parallel.hpp"

namespace evgs {

namespace {

constexpr double kDilation = 0.3;

double max_eigenvalue_2x2(const Eigen::Matrix2d& m) {
  const double mid = 0.5 * (m(0, 0) + m(1, 1));
  const double off = 0.5 * (m(0, 0) - m(1, 1));
  return mid + std::sqrt(off * off + m(0, 1) * m(1, 0));
}

Eigen::Vector3d camera_center(const Pose& pose) {
  return pose.rotation.conjugate() * (-pose.translation);
}

// One surviving contribution at a pixel, recorded during the pixel's
// front-to-back walk so the reverse walk can undo the transmittance chain.
struct PixelHit {
  int32_t splat;
  double alpha;     // as composited (after the clamp)
  double t_before;  // transmittance in front of this contribution
  bool clamped;
};

// Per-splat partial gradients of image-space quantities, accumulated per
// row block to keep reduction order independent of thread scheduling.
struct SplatAccum {
  Eigen::Vector2d mean2d = Eigen::Vector2d::Zero();
  Eigen::Matrix2d inv_cov = Eigen::Matrix2d::Zero();
  Eigen::Vector3d color = Eigen::Vector3d::Zero();
  double sigma = 0.0;
};

}  // namespace

std::optional<Splat2D> project_gaussian(const Gaussian& g, std::size_t source,
                                        int sh_degree, const Pose& pose,
                                        const Intrinsics& K,
                                        const RenderOptions& opts) {
  const Eigen::Vector3d t_cam = world_to_camera(pose, g.position);
  if (t_cam.z() <= opts.near_plane) return std::nullopt;
  const double sigma = g.opacity();
  if (sigma * 255.0 <= 1.0) return std::nullopt;  // below the skip level everywhere

  Splat2D s;
  s.source = source;
  s.depth = t_cam.z();
  s.mean2d = project_point(t_cam, K);
  s.base_opacity = sigma;

  const Eigen::Matrix<double, 2, 3> J = projection_jacobian(t_cam, K, opts.near_plane);
  const Eigen::Matrix3d Rw = pose.rotation.toRotationMatrix();
  const Eigen::Matrix<double, 2, 3> M2 = J * Rw;
  const Eigen::Matrix3d Sigma = build_covariance(g.log_scale, g.rotation);
  Eigen::Matrix2d cov = M2 * Sigma * M2.transpose();
  cov(0, 0) += kDilation;
  cov(1, 1) += kDilation;
  s.cov2d = cov;

  const double lam_max = max_eigenvalue_2x2(cov);
  const double cull_radius = 3.0 * std::sqrt(lam_max);
  if (s.mean2d.x() < -cull_radius || s.mean2d.x() > K.width + cull_radius ||
      s.mean2d.y() < -cull_radius || s.mean2d.y() > K.height + cull_radius)
    return std::nullopt;

  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  s.inv_cov2d << cov(1, 1) / det, -cov(0, 1) / det, -cov(1, 0) / det, cov(0, 0) / det;

  // Pixels farther than this from the mean can never reach the alpha skip
  // threshold, so row binning at this radius loses nothing.
  s.bin_radius = std::sqrt(2.0 * std::log(255.0 * sigma) * lam_max);

  s.view_dir = (g.position - camera_center(pose)).normalized();
  s.color = sh_to_color(g.color_coeffs, sh_degree, s.view_dir);
  return s;
}

namespace {

std::vector<std::vector<int32_t>> bin_rows(const std::vector<Splat2D>& splats,
                                           int height) {
  std::vector<std::vector<int32_t>> bins(static_cast<std::size_t>(height));
  for (std::size_t i = 0; i < splats.size(); ++i) {
    const Splat2D& s = splats[i];
    // Row y holds pixel centers at y + 0.5.
    const int y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - s.bin_radius - 0.5)));
    const int y1 = std::min(height - 1,
                            static_cast<int>(std::floor(s.mean2d.y() + s.bin_radius - 0.5)));
    for (int y = y0; y <= y1; ++y) bins[y].push_back(static_cast<int32_t>(i));
  }
  return bins;
}

}  // namespace

RenderResult render(const GaussianScene& scene, const Pose& pose,
                    const Intrinsics& K, const RenderOptions& opts) {
  RenderResult out;
  const std::size_t n = scene.size();
  std::vector<std::optional<Splat2D>> projected(n);
  parallel_for(n, [&](std::size_t i) {
    projected[i] = project_gaussian(scene.gaussians[i], i, scene.sh_degree, pose, K, opts);
  });
  for (std::size_t i = 0; i < n; ++i)
    if (projected[i]) out.splats.push_back(*projected[i]);
  std::sort(out.splats.begin(), out.splats.end(),
            [](const Splat2D& a, const Splat2D& b) {
              return a.depth != b.depth ? a.depth < b.depth : a.source < b.source;
            });
  out.row_bins = bin_rows(out.splats, K.height);

  out.image = Image(K.height, K.width, 3);
  parallel_for(static_cast<std::size_t>(K.height), [&](std::size_t yi) {
    const int y = static_cast<int>(yi);
    const double py = y + 0.5;
    for (int x = 0; x < K.width; ++x) {
      const double px = x + 0.5;
      double T = 1.0;
      Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
      for (const int32_t idx : out.row_bins[yi]) {
        const Splat2D& s = out.splats[idx];
        const double dx = px - s.mean2d.x();
        if (std::abs(dx) > s.bin_radius) continue;
        const double dy = py - s.mean2d.y();
        const double power = -0.5 * (s.inv_cov2d(0, 0) * dx * dx +
                                     2.0 * s.inv_cov2d(0, 1) * dx * dy +
                                     s.inv_cov2d(1, 1) * dy * dy);
        double alpha = s.base_opacity * std::exp(power);
        if (alpha < opts.alpha_skip) continue;
        alpha = std::min(alpha, opts.alpha_clamp);
        rgb += s.color * (alpha * T);
        T *= 1.0 - alpha;
        if (opts.transmittance_stop > 0.0 && T < opts.transmittance_stop) break;
      }
      rgb += scene.background * T;
      for (int c = 0; c < 3; ++c)
        out.image.at(y, x, c) = std::clamp(rgb[c], 0.0, 1.0);
    }
  });
  return out;
}

ParamGradients ParamGradients::zeros_like(const GaussianScene& scene) {
  ParamGradients g;
  const std::size_t n = scene.size();
  const std::size_t n_basis = static_cast<std::size_t>(sh_basis_count(scene.sh_degree));
  g.position.assign(n, Eigen::Vector3d::Zero());
  g.log_scale.assign(n, Eigen::Vector3d::Zero());
  g.rotation.assign(n, Eigen::Vector4d::Zero());
  g.opacity_logit.assign(n, 0.0);
  g.color_coeffs.assign(n, std::vector<Eigen::Vector3d>(n_basis, Eigen::Vector3d::Zero()));
  g.accum_mean2d_grad_norm.assign(n, 0.0);
  g.visible_count.assign(n, 0);
  return g;
}

void ParamGradients::add(const ParamGradients& other) {
  const std::size_t n = position.size();
  for (std::size_t i = 0; i < n; ++i) {
    position[i] += other.position[i];
    log_scale[i] += other.log_scale[i];
    rotation[i] += other.rotation[i];
    opacity_logit[i] += other.opacity_logit[i];
    for (std::size_t b = 0; b < color_coeffs[i].size(); ++b)
      color_coeffs[i][b] += other.color_coeffs[i][b];
    accum_mean2d_grad_norm[i] += other.accum_mean2d_grad_norm[i];
    visible_count[i] += other.visible_count[i];
  }
}

void ParamGradients::check_finite() const {
  for (std::size_t i = 0; i < position.size(); ++i) {
    bool ok = position[i].allFinite() && log_scale[i].allFinite() &&
              rotation[i].allFinite() && std::isfinite(opacity_logit[i]);
    for (const auto& c : color_coeffs[i]) ok = ok && c.allFinite();
    if (!ok)
      throw ValidationError("non-finite gradient for gaussian " + std::to_string(i));
  }
}

ParamGradients render_backward(const GaussianScene& scene, const Pose& pose,
                               const Intrinsics& K, const RenderResult& forward,
                               const Image& dL_dimage, const RenderOptions& opts) {
  if (dL_dimage.height != K.height || dL_dimage.width != K.width ||
      dL_dimage.channels != 3)
    throw std::invalid_argument("render_backward: gradient image shape mismatch");

  const std::vector<Splat2D>& splats = forward.splats;
  const std::size_t n_splats = splats.size();
  ParamGradients grads = ParamGradients::zeros_like(scene);
  if (n_splats == 0) return grads;

  const int height = K.height, width = K.width;
  const std::size_t n_blocks = std::min<std::size_t>(32, static_cast<std::size_t>(height));
  const int rows_per_block =
      static_cast<int>((static_cast<std::size_t>(height) + n_blocks - 1) / n_blocks);
  std::vector<std::vector<SplatAccum>> blocks(n_blocks);

  parallel_for(n_blocks, [&](std::size_t b) {
    std::vector<SplatAccum>& acc = blocks[b];
    acc.assign(n_splats, SplatAccum{});
    std::vector<PixelHit> hits;
    const int y_begin = static_cast<int>(b) * rows_per_block;
    const int y_end = std::min(height, y_begin + rows_per_block);
    for (int y = y_begin; y < y_end; ++y) {
      const double py = y + 0.5;
      for (int x = 0; x < width; ++x) {
        const double px = x + 0.5;
        const Eigen::Vector3d g{dL_dimage.at(y, x, 0), dL_dimage.at(y, x, 1),
                                dL_dimage.at(y, x, 2)};
        hits.clear();
        double T = 1.0;
        // Forward walk replays the composite exactly, recording survivors.
        for (const int32_t idx : forward.row_bins[y]) {
          const Splat2D& s = splats[idx];
          const double dx = px - s.mean2d.x();
          if (std::abs(dx) > s.bin_radius) continue;
          const double dy = py - s.mean2d.y();
          const double power = -0.5 * (s.inv_cov2d(0, 0) * dx * dx +
                                       2.0 * s.inv_cov2d(0, 1) * dx * dy +
                                       s.inv_cov2d(1, 1) * dy * dy);
          double alpha = s.base_opacity * std::exp(power);
          if (alpha < opts.alpha_skip) continue;
          const bool clamped = alpha > opts.alpha_clamp;
          if (clamped) alpha = opts.alpha_clamp;
          hits.push_back({idx, alpha, T, clamped});
          T *= 1.0 - alpha;
          if (opts.transmittance_stop > 0.0 && T < opts.transmittance_stop) break;
        }
        // Reverse walk: S carries everything composited behind the current
        // contribution, so dC/dalpha_i = c_i T_i - S_i / (1 - alpha_i).
        Eigen::Vector3d S = scene.background * T;
        for (std::size_t h = hits.size(); h-- > 0;) {
          const PixelHit& hit = hits[h];
          const Splat2D& s = splats[hit.splat];
          SplatAccum& a = acc[hit.splat];
          const double at = hit.alpha * hit.t_before;
          a.color += g * at;
          const double dalpha =
              g.dot(s.color * hit.t_before - S / (1.0 - hit.alpha));
          if (!hit.clamped) {
            const double gauss = hit.alpha / s.base_opacity;  // exp(power)
            a.sigma += dalpha * gauss;
            const double dpower = dalpha * s.base_opacity * gauss;
            const Eigen::Vector2d d{px - s.mean2d.x(), py - s.mean2d.y()};
            const Eigen::Vector2d Ad = s.inv_cov2d * d;
            a.mean2d += dpower * Ad;
            a.inv_cov += dpower * (-0.5) * (d * d.transpose());
          }
          S += s.color * at;
        }
      }
    }
  });

  // Fixed-order reduction over blocks keeps sums independent of scheduling.
  std::vector<SplatAccum> total(n_splats);
  for (std::size_t i = 0; i < n_splats; ++i) {
    for (std::size_t b = 0; b < n_blocks; ++b) {
      total[i].mean2d += blocks[b][i].mean2d;
      total[i].inv_cov += blocks[b][i].inv_cov;
      total[i].color += blocks[b][i].color;
      total[i].sigma += blocks[b][i].sigma;
    }
  }

  const Eigen::Matrix3d Rw = pose.rotation.toRotationMatrix();
  const Eigen::Vector3d cam_center = camera_center(pose);
  parallel_for(n_splats, [&](std::size_t i) {
    const Splat2D& s = splats[i];
    const SplatAccum& t = total[i];
    const Gaussian& gsn = scene.gaussians[s.source];

    const Eigen::Vector3d t_cam = world_to_camera(pose, gsn.position);
    const double z = t_cam.z();
    const Eigen::Matrix<double, 2, 3> J = projection_jacobian(t_cam, K, opts.near_plane);
    const Eigen::Matrix<double, 2, 3> M2 = J * Rw;
    const Eigen::Matrix3d Sigma = build_covariance(gsn.log_scale, gsn.rotation);

    // inv_cov adjoint through the matrix inverse, then through the EWA
    // projection (the dilation constant has zero derivative).
    const Eigen::Matrix2d dCov = -s.inv_cov2d * t.inv_cov * s.inv_cov2d;
    const Eigen::Matrix3d dSigma = M2.transpose() * dCov * M2;
    const Eigen::Matrix<double, 2, 3> dM2 = (dCov + dCov.transpose()) * M2 * Sigma;
    const Eigen::Matrix<double, 2, 3> dJ = dM2 * Rw.transpose();

    // mean2d path: the projection's Jacobian is exactly J.
    Eigen::Vector3d d_tcam = J.transpose() * t.mean2d;
    // J itself depends on the camera-space point.
    const double fx = K.fx, fy = K.fy;
    const double z2 = z * z, z3 = z2 * z;
    d_tcam.x() += dJ(0, 2) * (-fx / z2);
    d_tcam.y() += dJ(1, 2) * (-fy / z2);
    d_tcam.z() += dJ(0, 0) * (-fx / z2) + dJ(1, 1) * (-fy / z2) +
                  dJ(0, 2) * (2.0 * fx * t_cam.x() / z3) +
                  dJ(1, 2) * (2.0 * fy * t_cam.y() / z3);

    Eigen::Vector3d d_position = Rw.transpose() * d_tcam;

    const ShColorGrads color_g =
        sh_to_color_backward(gsn.color_coeffs, scene.sh_degree, s.view_dir, t.color);
    // View direction normalization: project out the radial component.
    const Eigen::Vector3d v = gsn.position - cam_center;
    d_position += (color_g.dir - s.view_dir * s.view_dir.dot(color_g.dir)) / v.norm();

    const CovarianceGrads cov_g =
        covariance_backward(gsn.log_scale, gsn.rotation, dSigma);

    grads.position[s.source] = d_position;
    grads.log_scale[s.source] = cov_g.log_scale;
    grads.rotation[s.source] = cov_g.rotation;
    const double sig = s.base_opacity;
    grads.opacity_logit[s.source] = t.sigma * sig * (1.0 - sig);
    grads.color_coeffs[s.source] = color_g.coeffs;
    grads.accum_mean2d_grad_norm[s.source] = t.mean2d.norm();
    grads.visible_count[s.source] = 1;
  });

  grads.check_finite();
  return grads;
}

}  // namespace evgs

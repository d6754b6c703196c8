#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "evgs/rng.hpp"

namespace evgs {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline int sh_basis_count(int degree) { return (degree + 1) * (degree + 1); }

/// One anisotropic 3D Gaussian. Scale is stored as logs and opacity as a
/// logit so every real-valued parameter vector is admissible; the rotation
/// quaternion (w,x,y,z) is renormalized after each optimizer step.
struct Gaussian {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0};
  double opacity_logit = 0.0;
  std::vector<Eigen::Vector3d> color_coeffs;  // one RGB triple per basis term

  Eigen::Vector3d scale() const { return log_scale.array().exp(); }
  double opacity() const { return sigmoid(opacity_logit); }
};

struct Bounds3 {
  Eigen::Vector3d lo{-1.0, -1.0, -1.0};
  Eigen::Vector3d hi{1.0, 1.0, 1.0};

  void validate() const;
  double diagonal() const { return (hi - lo).norm(); }
};

struct GaussianScene {
  std::vector<Gaussian> gaussians;
  Eigen::Vector3d background = Eigen::Vector3d::Zero();
  int sh_degree = 0;

  void validate() const;
  std::size_t size() const { return gaussians.size(); }
};

/// Uniformly placed points, isotropic scale set from the mean nearest
/// neighbor distance (estimated on at most 1000 points), identity rotations,
/// opacity 0.1, mid-gray color.
GaussianScene init_random_cloud(int n, const Bounds3& bounds, Rng& rng,
                                int sh_degree = 0);

/// Rotation matrix of a quaternion (w,x,y,z); normalizes defensively.
Eigen::Matrix3d quat_to_rotmat(const Eigen::Vector4d& q);

/// Sigma = R diag(s^2) R^T.
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale,
                                 const Eigen::Vector4d& rotation);

struct CovarianceGrads {
  Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
  Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
};

/// Pullback of dL/dSigma (a full 3x3 matrix of entrywise partials) onto the
/// stored parameters, chained through the scale exponential and the
/// quaternion normalization.
CovarianceGrads covariance_backward(const Eigen::Vector3d& log_scale,
                                    const Eigen::Vector4d& rotation,
                                    const Eigen::Matrix3d& dL_dSigma);

/// Real SH basis values at a unit direction, lowest degree first.
std::vector<double> sh_basis(int degree, const Eigen::Vector3d& dir);

/// d(basis)/d(dir) as an n_basis x 3 matrix (unit-length chain handled by
/// the caller).
Eigen::MatrixXd sh_basis_jacobian(int degree, const Eigen::Vector3d& dir);

/// Basis-weighted coefficient sum plus 0.5, clamped to [0,1] per channel.
Eigen::Vector3d sh_to_color(const std::vector<Eigen::Vector3d>& coeffs, int degree,
                            const Eigen::Vector3d& dir);

struct ShColorGrads {
  std::vector<Eigen::Vector3d> coeffs;
  Eigen::Vector3d dir = Eigen::Vector3d::Zero();
};

/// Gradients of the clamped color; clamped channels pass zero.
ShColorGrads sh_to_color_backward(const std::vector<Eigen::Vector3d>& coeffs,
                                  int degree, const Eigen::Vector3d& dir,
                                  const Eigen::Vector3d& dL_dcolor);

// Scene checkpoint IO (JSON, written atomically via a temp file + rename).
void save_scene(const std::string& path, const GaussianScene& scene);
GaussianScene load_scene(const std::string& path);

}  // namespace evgs

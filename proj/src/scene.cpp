#include "evgs/scene.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "evgs/errors.hpp"

namespace evgs {

namespace {

// Base spherical-harmonics constants, degree 0 through 3.
constexpr double kSH0 = 0.28209479177387814;
constexpr double kSH1 = 0.4886025119029199;
constexpr double kSH2[5] = {1.0925484305920792, -1.0925484305920792,
                            0.31539156525252005, -1.0925484305920792,
                            0.5462742152960396};
constexpr double kSH3[7] = {-0.5900435899266435, 2.890611442640554,
                            -0.4570457994644658, 0.3731763325901154,
                            -0.4570457994644658, 1.445305721320277,
                            -0.5900435899266435};

}  // namespace

void Bounds3::validate() const {
  for (int i = 0; i < 3; ++i)
    if (!(lo[i] < hi[i]))
      throw ValidationError("bounds: lo must be strictly below hi on every axis");
}

void GaussianScene::validate() const {
  if (sh_degree < 0 || sh_degree > 3)
    throw ValidationError("scene: sh_degree must be in [0,3]");
  const std::size_t n_basis = static_cast<std::size_t>(sh_basis_count(sh_degree));
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    if (g.color_coeffs.size() != n_basis)
      throw ValidationError("gaussian " + std::to_string(i) +
                            ": color coefficient count mismatch");
    if (std::abs(g.rotation.norm() - 1.0) > 1e-6)
      throw ValidationError("gaussian " + std::to_string(i) +
                            ": rotation quaternion not normalized");
    if (!g.position.allFinite() || !g.log_scale.allFinite() ||
        !std::isfinite(g.opacity_logit))
      throw ValidationError("gaussian " + std::to_string(i) + ": non-finite parameter");
  }
  for (int c = 0; c < 3; ++c)
    if (!(background[c] >= 0.0 && background[c] <= 1.0))
      throw ValidationError("scene: background outside [0,1]");
}

GaussianScene init_random_cloud(int n, const Bounds3& bounds, Rng& rng,
                                int sh_degree) {
  if (n <= 0) throw std::invalid_argument("init_random_cloud: n must be >= 1");
  bounds.validate();
  GaussianScene scene;
  scene.sh_degree = sh_degree;
  scene.gaussians.resize(static_cast<std::size_t>(n));
  for (Gaussian& g : scene.gaussians) {
    for (int a = 0; a < 3; ++a) g.position[a] = rng.uniform(bounds.lo[a], bounds.hi[a]);
  }

  // Mean nearest-neighbor distance over a subsample caps the cost at 10^6
  // pairwise distances regardless of n.
  const std::size_t m = std::min<std::size_t>(scene.gaussians.size(), 1000);
  double scale = bounds.diagonal() * 0.1;  // fallback for a single point
  if (m >= 2) {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i) continue;
        best = std::min(best,
                        (scene.gaussians[i].position - scene.gaussians[j].position).norm());
      }
      total += best;
    }
    scale = total / static_cast<double>(m);
  }

  const double log_s = std::log(scale);
  const double op_logit = logit(0.1);
  const std::size_t n_basis = static_cast<std::size_t>(sh_basis_count(sh_degree));
  for (Gaussian& g : scene.gaussians) {
    g.log_scale.setConstant(log_s);
    g.rotation = {1.0, 0.0, 0.0, 0.0};
    g.opacity_logit = op_logit;
    g.color_coeffs.assign(n_basis, Eigen::Vector3d::Zero());
  }
  return scene;
}

Eigen::Matrix3d quat_to_rotmat(const Eigen::Vector4d& q) {
  const Eigen::Vector4d u = q / q.norm();
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale,
                                 const Eigen::Vector4d& rotation) {
  const Eigen::Matrix3d R = quat_to_rotmat(rotation);
  const Eigen::Vector3d s2 = (2.0 * log_scale).array().exp();
  return R * s2.asDiagonal() * R.transpose();
}

CovarianceGrads covariance_backward(const Eigen::Vector3d& log_scale,
                                    const Eigen::Vector4d& rotation,
                                    const Eigen::Matrix3d& dL_dSigma) {
  const Eigen::Vector4d u = rotation / rotation.norm();
  const double w = u[0], x = u[1], y = u[2], z = u[3];
  const Eigen::Matrix3d R = quat_to_rotmat(rotation);
  const Eigen::Vector3d s = log_scale.array().exp();

  // Sigma = M M^T with M = R diag(s); dL/dM = (G + G^T) M.
  const Eigen::Matrix3d M = R * s.asDiagonal();
  const Eigen::Matrix3d dM = (dL_dSigma + dL_dSigma.transpose()) * M;

  CovarianceGrads out;
  const Eigen::Matrix3d dR = dM * s.asDiagonal();
  for (int b = 0; b < 3; ++b)
    out.log_scale[b] = dM.col(b).dot(R.col(b)) * s[b];

  Eigen::Matrix3d dRdq[4];
  dRdq[0] << 0, -z, y,
             z, 0, -x,
             -y, x, 0;
  dRdq[1] << 0, y, z,
             y, -2 * x, -w,
             z, w, -2 * x;
  dRdq[2] << -2 * y, x, w,
             x, 0, z,
             -w, z, -2 * y;
  dRdq[3] << -2 * z, -w, x,
             w, -2 * z, y,
             x, y, 0;

  Eigen::Vector4d d_unit;
  for (int k = 0; k < 4; ++k)
    d_unit[k] = 2.0 * (dR.array() * dRdq[k].array()).sum();
  // Chain through normalization: d(q/|q|)_j/dq_k = (delta_jk - u_j u_k)/|q|.
  out.rotation = (d_unit - u * u.dot(d_unit)) / rotation.norm();
  return out;
}

std::vector<double> sh_basis(int degree, const Eigen::Vector3d& dir) {
  if (degree < 0 || degree > 3)
    throw std::invalid_argument("sh_basis: degree must be in [0,3]");
  std::vector<double> b(static_cast<std::size_t>(sh_basis_count(degree)));
  b[0] = kSH0;
  if (degree < 1) return b;
  const double x = dir.x(), y = dir.y(), z = dir.z();
  b[1] = -kSH1 * y;
  b[2] = kSH1 * z;
  b[3] = -kSH1 * x;
  if (degree < 2) return b;
  const double xx = x * x, yy = y * y, zz = z * z;
  b[4] = kSH2[0] * x * y;
  b[5] = kSH2[1] * y * z;
  b[6] = kSH2[2] * (2 * zz - xx - yy);
  b[7] = kSH2[3] * x * z;
  b[8] = kSH2[4] * (xx - yy);
  if (degree < 3) return b;
  b[9] = kSH3[0] * y * (3 * xx - yy);
  b[10] = kSH3[1] * x * y * z;
  b[11] = kSH3[2] * y * (4 * zz - xx - yy);
  b[12] = kSH3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  b[13] = kSH3[4] * x * (4 * zz - xx - yy);
  b[14] = kSH3[5] * z * (xx - yy);
  b[15] = kSH3[6] * x * (xx - 3 * yy);
  return b;
}

Eigen::MatrixXd sh_basis_jacobian(int degree, const Eigen::Vector3d& dir) {
  if (degree < 0 || degree > 3)
    throw std::invalid_argument("sh_basis_jacobian: degree must be in [0,3]");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(sh_basis_count(degree), 3);
  if (degree < 1) return J;
  const double x = dir.x(), y = dir.y(), z = dir.z();
  J.row(1) << 0, -kSH1, 0;
  J.row(2) << 0, 0, kSH1;
  J.row(3) << -kSH1, 0, 0;
  if (degree < 2) return J;
  const double xx = x * x, yy = y * y, zz = z * z;
  J.row(4) << kSH2[0] * y, kSH2[0] * x, 0;
  J.row(5) << 0, kSH2[1] * z, kSH2[1] * y;
  J.row(6) << -2 * kSH2[2] * x, -2 * kSH2[2] * y, 4 * kSH2[2] * z;
  J.row(7) << kSH2[3] * z, 0, kSH2[3] * x;
  J.row(8) << 2 * kSH2[4] * x, -2 * kSH2[4] * y, 0;
  if (degree < 3) return J;
  J.row(9) << 6 * kSH3[0] * x * y, kSH3[0] * (3 * xx - 3 * yy), 0;
  J.row(10) << kSH3[1] * y * z, kSH3[1] * x * z, kSH3[1] * x * y;
  J.row(11) << -2 * kSH3[2] * x * y, kSH3[2] * (4 * zz - xx - 3 * yy),
      8 * kSH3[2] * y * z;
  J.row(12) << -6 * kSH3[3] * x * z, -6 * kSH3[3] * y * z,
      kSH3[3] * (6 * zz - 3 * xx - 3 * yy);
  J.row(13) << kSH3[4] * (4 * zz - 3 * xx - yy), -2 * kSH3[4] * x * y,
      8 * kSH3[4] * x * z;
  J.row(14) << 2 * kSH3[5] * x * z, -2 * kSH3[5] * y * z, kSH3[5] * (xx - yy);
  J.row(15) << kSH3[6] * (3 * xx - 3 * yy), -6 * kSH3[6] * x * y, 0;
  return J;
}

Eigen::Vector3d sh_to_color(const std::vector<Eigen::Vector3d>& coeffs, int degree,
                            const Eigen::Vector3d& dir) {
  const std::vector<double> basis = sh_basis(degree, dir);
  if (coeffs.size() < basis.size())
    throw std::invalid_argument("sh_to_color: too few coefficients for the degree");
  Eigen::Vector3d c{0.5, 0.5, 0.5};
  for (std::size_t b = 0; b < basis.size(); ++b) c += basis[b] * coeffs[b];
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

ShColorGrads sh_to_color_backward(const std::vector<Eigen::Vector3d>& coeffs,
                                  int degree, const Eigen::Vector3d& dir,
                                  const Eigen::Vector3d& dL_dcolor) {
  const std::vector<double> basis = sh_basis(degree, dir);
  if (coeffs.size() < basis.size())
    throw std::invalid_argument("sh_to_color_backward: too few coefficients");
  Eigen::Vector3d pre{0.5, 0.5, 0.5};
  for (std::size_t b = 0; b < basis.size(); ++b) pre += basis[b] * coeffs[b];
  Eigen::Vector3d masked = dL_dcolor;
  for (int ch = 0; ch < 3; ++ch)
    if (pre[ch] <= 0.0 || pre[ch] >= 1.0) masked[ch] = 0.0;

  ShColorGrads out;
  out.coeffs.resize(basis.size());
  for (std::size_t b = 0; b < basis.size(); ++b) out.coeffs[b] = basis[b] * masked;
  const Eigen::MatrixXd Jb = sh_basis_jacobian(degree, dir);
  for (std::size_t b = 0; b < basis.size(); ++b)
    out.dir += Jb.row(static_cast<int>(b)).transpose() * masked.dot(coeffs[b]);
  return out;
}

}  // namespace evgs

#pragma once

#include "dyntrack/image.hpp"
#include "dyntrack/lds.hpp"

#include <Eigen/Dense>

namespace dyntrack {

/// Epanechnikov kernel with bandwidth H = diag(1 / half_width, 1 / half_height).
struct KernelSpec {
  double half_width = 1.0;   ///< along x (columns)
  double half_height = 1.0;  ///< along y (rows)

  Eigen::Vector2d scale() const { return {1.0 / half_width, 1.0 / half_height}; }
};

/// Kernel whose support is the template extent.
KernelSpec kernel_for(const TemplateGeometry& geometry);

/// B bins with edges r(u) = u / B on [0, 1]; `sharpness` is the sigmoid slope.
struct BinningSpec {
  int bins = 10;
  double sharpness = 100.0;
};

void validate(const KernelSpec& kernel);
void validate(const BinningSpec& binning);

struct SoftHistogram {
  Eigen::VectorXd values;
  double kappa = 0.0;
};

/// 1 - |Hz|^2 inside the unit ball, 0 outside.
inline double epanechnikov(const Eigen::Vector2d& z, const KernelSpec& kernel) {
  const double r2 = z.cwiseProduct(kernel.scale()).squaredNorm();
  return r2 < 1.0 ? 1.0 - r2 : 0.0;
}

/// -2 H^T H z inside the support, 0 outside.
inline Eigen::Vector2d kernel_gradient(const Eigen::Vector2d& z, const KernelSpec& kernel) {
  const Eigen::Vector2d h = kernel.scale();
  if (z.cwiseProduct(h).squaredNorm() >= 1.0) return Eigen::Vector2d::Zero();
  return -2.0 * h.cwiseProduct(h).cwiseProduct(z);
}

/// K(z) for every template pixel, stacked column-wise.
Eigen::VectorXd kernel_weights(const TemplateGeometry& geometry, const KernelSpec& kernel);

/// Sigmoid phi_u(s) = 1 / (1 + exp(-sharpness (s - u / B))).
double bin_sigmoid(double s, int u, const BinningSpec& binning);

/// Hard bin of an intensity, 0-based; -1 when outside [0, 1].
int hard_bin(double s, const BinningSpec& binning);

/// Kernel-weighted histogram with exact binning.
SoftHistogram hard_histogram(const Eigen::VectorXd& patch, const TemplateGeometry& geometry,
                             const KernelSpec& kernel, const BinningSpec& binning);

/// Kernel-weighted histogram with sigmoid-difference binning.
SoftHistogram soft_histogram(const Eigen::VectorXd& patch, const TemplateGeometry& geometry,
                             const KernelSpec& kernel, const BinningSpec& binning);

/// N x B matrix with entries phi_{j-1}(y_z) - phi_j(y_z).
Eigen::MatrixXd sifting_matrix(const Eigen::VectorXd& intensities, const BinningSpec& binning);

/// N x B matrix with entries phi'_{j-1}(s_z) - phi'_j(s_z).
Eigen::MatrixXd sifting_derivative(const Eigen::VectorXd& intensities, const BinningSpec& binning);

/// Sum of (sqrt(h1) - sqrt(h2))^2.
double matusita(const SoftHistogram& h1, const SoftHistogram& h2);
double bhattacharyya(const SoftHistogram& h1, const SoftHistogram& h2);

/// Histogram together with its Jacobian (bins x parameters).
struct HistogramJacobian {
  SoftHistogram histogram;
  Eigen::MatrixXd jacobian;
};

/// Soft histogram of the frame under a kernel centered at `location`.
///
/// The kernel is displaced over the integer pixel grid,
/// zeta(l) = U^T K(p - l) / kappa(l) with kappa(l) = sum_p K(p - l). This equals
/// soft_histogram of the window patch whenever the window is pixel-aligned, sums
/// to the same total at every l, and is differentiable in l everywhere.
SoftHistogram window_histogram(const Frame& frame, const Eigen::Vector2d& location,
                               const TemplateGeometry& geometry, const KernelSpec& kernel,
                               const BinningSpec& binning);

/// window_histogram plus d zeta / d location (B x 2).
HistogramJacobian window_histogram_jacobian(const Frame& frame, const Eigen::Vector2d& location,
                                            const TemplateGeometry& geometry,
                                            const KernelSpec& kernel, const BinningSpec& binning);

/// Soft histogram of mu + C x plus d zeta / d x (B x n).
HistogramJacobian template_histogram_jacobian(const LdsModel& model, const Eigen::VectorXd& x,
                                              const KernelSpec& kernel,
                                              const BinningSpec& binning);

/// Soft histogram of mu + C x.
SoftHistogram template_histogram(const LdsModel& model, const Eigen::VectorXd& x,
                                 const KernelSpec& kernel, const BinningSpec& binning);

/// Floor applied to empty bins before diag(zeta)^(-1/2).
inline constexpr double kEmptyBinFloor = 1e-6;

/// sqrt(zeta) continued linearly below the floor, so that its derivative is
/// exactly 1/2 max(zeta, floor)^(-1/2).
Eigen::VectorXd root_histogram(const Eigen::VectorXd& zeta);

/// d root_histogram from d zeta: 1/2 diag(max(zeta, floor))^(-1/2) J.
Eigen::MatrixXd sqrt_histogram_jacobian(const HistogramJacobian& hj);

/// L = 1 / (2 sigma_H^2) diag(zeta(y(l)))^(-1/2) U^T J_K  (B x 2).
Eigen::MatrixXd location_jacobian_L(const Frame& frame, const Eigen::Vector2d& location,
                                    const TemplateGeometry& geometry, const KernelSpec& kernel,
                                    const BinningSpec& binning, double sigma_H2);

/// M = 1 / (2 sigma_H^2) diag(zeta(mu + C x))^(-1/2) Phi'^T diag(K / kappa) C  (B x n).
Eigen::MatrixXd state_jacobian_M(const LdsModel& model, const Eigen::VectorXd& x,
                                 const KernelSpec& kernel, const BinningSpec& binning,
                                 double sigma_H2);

/// Raw-intensity feature map. Its Jacobian in x is C; in the location it is the
/// bilinear image gradient stack (patch_location_jacobian).
inline const Eigen::VectorXd& identity_feature(const Eigen::VectorXd& patch) { return patch; }

}  // namespace dyntrack

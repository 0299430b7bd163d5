#include "dyntrack/features.hpp"

#include <cmath>
#include <vector>

namespace dyntrack {

namespace {

// phi_0 .. phi_B at s. Uses phi_u = 1 / (1 + e^{-a s} r^u) with r = e^{a / B}, one exp per
// call; falls back to one exp per edge when r^B could overflow.
void sigmoid_bank(double s, const BinningSpec& binning, double* phi) {
  const double a = binning.sharpness;
  if (a > 600.0) {
    for (int u = 0; u <= binning.bins; ++u) phi[u] = bin_sigmoid(s, u, binning);
    return;
  }
  const double r = std::exp(a / binning.bins);
  double e = std::exp(-a * s);
  for (int u = 0; u <= binning.bins; ++u) {
    phi[u] = 1.0 / (1.0 + e);
    e *= r;
  }
}

void sigmoid_bank(double s, const BinningSpec& binning, Eigen::Ref<Eigen::VectorXd> phi) {
  sigmoid_bank(s, binning, phi.data());
}

double kernel_normalizer(const TemplateGeometry& geometry, const KernelSpec& kernel) {
  const double kappa = kernel_weights(geometry, kernel).sum();
  if (!(kappa > 0.0)) throw Error("kernel has zero mass over the template (kappa = 0)");
  return kappa;
}

void check_patch(const Eigen::VectorXd& patch, const TemplateGeometry& geometry) {
  if (patch.size() != geometry.size()) {
    throw Error("patch length " + std::to_string(patch.size()) + " does not match geometry " +
                std::to_string(geometry.rows) + "x" + std::to_string(geometry.cols));
  }
}

}  // namespace

KernelSpec kernel_for(const TemplateGeometry& geometry) {
  validate(geometry);
  return {0.5 * geometry.cols, 0.5 * geometry.rows};
}

void validate(const KernelSpec& kernel) {
  if (!(kernel.half_width > 0.0) || !(kernel.half_height > 0.0)) {
    throw Error("kernel bandwidth must be positive");
  }
}

void validate(const BinningSpec& binning) {
  if (binning.bins < 2) throw Error("histograms need at least two bins");
  if (!(binning.sharpness > 0.0)) throw Error("sigmoid sharpness must be positive");
}

Eigen::VectorXd kernel_weights(const TemplateGeometry& geometry, const KernelSpec& kernel) {
  validate(geometry);
  validate(kernel);
  Eigen::VectorXd weights(geometry.size());
  for (int col = 0; col < geometry.cols; ++col) {
    for (int row = 0; row < geometry.rows; ++row) {
      weights(geometry.index(row, col)) = epanechnikov(geometry.offset(row, col), kernel);
    }
  }
  return weights;
}

double bin_sigmoid(double s, int u, const BinningSpec& binning) {
  const double edge = static_cast<double>(u) / binning.bins;
  return 1.0 / (1.0 + std::exp(-binning.sharpness * (s - edge)));
}

int hard_bin(double s, const BinningSpec& binning) {
  if (!(s >= 0.0 && s <= 1.0)) return -1;
  return std::min(static_cast<int>(std::floor(s * binning.bins)), binning.bins - 1);
}

SoftHistogram hard_histogram(const Eigen::VectorXd& patch, const TemplateGeometry& geometry,
                             const KernelSpec& kernel, const BinningSpec& binning) {
  check_patch(patch, geometry);
  validate(binning);
  const Eigen::VectorXd weights = kernel_weights(geometry, kernel);
  SoftHistogram h{Eigen::VectorXd::Zero(binning.bins), kernel_normalizer(geometry, kernel)};
  for (Eigen::Index i = 0; i < patch.size(); ++i) {
    const int b = hard_bin(patch(i), binning);
    if (b >= 0) h.values(b) += weights(i);
  }
  h.values /= h.kappa;
  return h;
}

SoftHistogram soft_histogram(const Eigen::VectorXd& patch, const TemplateGeometry& geometry,
                             const KernelSpec& kernel, const BinningSpec& binning) {
  check_patch(patch, geometry);
  validate(binning);
  const Eigen::VectorXd weights = kernel_weights(geometry, kernel);
  const double kappa = kernel_normalizer(geometry, kernel);
  return {sifting_matrix(patch, binning).transpose() * weights / kappa, kappa};
}

Eigen::MatrixXd sifting_matrix(const Eigen::VectorXd& intensities, const BinningSpec& binning) {
  validate(binning);
  Eigen::MatrixXd U(intensities.size(), binning.bins);
  Eigen::VectorXd phi(binning.bins + 1);
  for (Eigen::Index z = 0; z < intensities.size(); ++z) {
    sigmoid_bank(intensities(z), binning, phi);
    U.row(z) = (phi.head(binning.bins) - phi.tail(binning.bins)).transpose();
  }
  return U;
}

Eigen::MatrixXd sifting_derivative(const Eigen::VectorXd& intensities,
                                   const BinningSpec& binning) {
  validate(binning);
  Eigen::MatrixXd D(intensities.size(), binning.bins);
  Eigen::VectorXd phi(binning.bins + 1);
  for (Eigen::Index z = 0; z < intensities.size(); ++z) {
    sigmoid_bank(intensities(z), binning, phi);
    const Eigen::VectorXd dphi =
        binning.sharpness * phi.cwiseProduct(Eigen::VectorXd::Ones(phi.size()) - phi);
    D.row(z) = (dphi.head(binning.bins) - dphi.tail(binning.bins)).transpose();
  }
  return D;
}

double matusita(const SoftHistogram& h1, const SoftHistogram& h2) {
  if (h1.values.size() != h2.values.size()) {
    throw Error("matusita: histograms have " + std::to_string(h1.values.size()) + " and " +
                std::to_string(h2.values.size()) + " bins");
  }
  return (h1.values.cwiseMax(0.0).cwiseSqrt() - h2.values.cwiseMax(0.0).cwiseSqrt()).squaredNorm();
}

double bhattacharyya(const SoftHistogram& h1, const SoftHistogram& h2) {
  if (h1.values.size() != h2.values.size()) throw Error("bhattacharyya: bin count mismatch");
  return h1.values.cwiseMax(0.0).cwiseProduct(h2.values.cwiseMax(0.0)).cwiseSqrt().sum();
}

namespace {

HistogramJacobian window_pass(const Frame& frame, const Eigen::Vector2d& location,
                              const TemplateGeometry& geometry, const KernelSpec& kernel,
                              const BinningSpec& binning, bool with_jacobian) {
  validate(geometry);
  validate(kernel);
  validate(binning);
  const int B = binning.bins;
  HistogramJacobian out{{Eigen::VectorXd::Zero(B), 0.0},
                        Eigen::MatrixXd::Zero(B, with_jacobian ? 2 : 0)};

  const auto x_lo = static_cast<long>(std::ceil(location.x() - kernel.half_width));
  const auto x_hi = static_cast<long>(std::floor(location.x() + kernel.half_width));
  const auto y_lo = static_cast<long>(std::ceil(location.y() - kernel.half_height));
  const auto y_hi = static_cast<long>(std::floor(location.y() + kernel.half_height));

  std::vector<double> phi(B + 1);
  double* hist = out.histogram.values.data();
  double* jac = out.jacobian.data();
  double kappa = 0.0;
  Eigen::Vector2d grad_sum = Eigen::Vector2d::Zero();
  for (long px = x_lo; px <= x_hi; ++px) {
    for (long py = y_lo; py <= y_hi; ++py) {
      const Eigen::Vector2d z = Eigen::Vector2d(px, py) - location;
      const double w = epanechnikov(z, kernel);
      if (w <= 0.0) continue;
      if (px < 0 || py < 0 || px >= frame.cols() || py >= frame.rows()) {
        throw Error("kernel window at (" + std::to_string(location.x()) + ", " +
                    std::to_string(location.y()) + ") leaves the frame");
      }
      kappa += w;
      sigmoid_bank(frame(py, px), binning, phi.data());
      if (with_jacobian) {
        // d K(p - l) / d l = -grad K(p - l)
        const Eigen::Vector2d g = kernel_gradient(z, kernel);
        grad_sum += g;
        for (int u = 0; u < B; ++u) {
          const double sift = phi[u] - phi[u + 1];
          hist[u] += w * sift;
          jac[u] -= sift * g.x();
          jac[B + u] -= sift * g.y();
        }
      } else {
        for (int u = 0; u < B; ++u) hist[u] += w * (phi[u] - phi[u + 1]);
      }
    }
  }
  if (!(kappa > 0.0)) throw Error("kernel has zero mass over the window (kappa = 0)");
  out.histogram.kappa = kappa;
  out.histogram.values /= kappa;
  // zeta = h / kappa(l) with d kappa / d l = -sum grad K.
  if (with_jacobian) {
    out.jacobian += out.histogram.values * grad_sum.transpose();
    out.jacobian /= kappa;
  }
  return out;
}

HistogramJacobian template_pass(const LdsModel& model, const Eigen::VectorXd& x,
                                const KernelSpec& kernel, const BinningSpec& binning,
                                bool with_jacobian) {
  validate(binning);
  const Eigen::VectorXd s = predict_template(model, x);
  const Eigen::VectorXd weights = kernel_weights(model.geometry, kernel);
  const double kappa = weights.sum();
  if (!(kappa > 0.0)) throw Error("kernel has zero mass over the template (kappa = 0)");
  const int B = binning.bins;
  const double a = binning.sharpness;
  HistogramJacobian out{{Eigen::VectorXd::Zero(B), kappa}, Eigen::MatrixXd()};

  // Row z of D holds w_z d sift(s_z) / d s; the Jacobian is D^T C / kappa.
  Eigen::MatrixXd D;
  if (with_jacobian) D = Eigen::MatrixXd::Zero(B, s.size());
  std::vector<double> phi(B + 1);
  double* hist = out.histogram.values.data();
  for (Eigen::Index z = 0; z < s.size(); ++z) {
    const double w = weights(z);
    if (w <= 0.0) continue;
    sigmoid_bank(s(z), binning, phi.data());
    for (int u = 0; u < B; ++u) hist[u] += w * (phi[u] - phi[u + 1]);
    if (with_jacobian) {
      double* d = D.col(z).data();
      double prev = a * phi[0] * (1.0 - phi[0]);
      for (int u = 0; u < B; ++u) {
        const double next = a * phi[u + 1] * (1.0 - phi[u + 1]);
        d[u] = w * (prev - next);
        prev = next;
      }
    }
  }
  out.histogram.values /= kappa;
  if (with_jacobian) {
    out.jacobian = x.size() > 0 ? Eigen::MatrixXd(D * model.C / kappa)
                                : Eigen::MatrixXd::Zero(B, 0);
  }
  return out;
}

}  // namespace

HistogramJacobian window_histogram_jacobian(const Frame& frame, const Eigen::Vector2d& location,
                                            const TemplateGeometry& geometry,
                                            const KernelSpec& kernel,
                                            const BinningSpec& binning) {
  return window_pass(frame, location, geometry, kernel, binning, true);
}

SoftHistogram window_histogram(const Frame& frame, const Eigen::Vector2d& location,
                               const TemplateGeometry& geometry, const KernelSpec& kernel,
                               const BinningSpec& binning) {
  return window_pass(frame, location, geometry, kernel, binning, false).histogram;
}

HistogramJacobian template_histogram_jacobian(const LdsModel& model, const Eigen::VectorXd& x,
                                              const KernelSpec& kernel,
                                              const BinningSpec& binning) {
  return template_pass(model, x, kernel, binning, true);
}

SoftHistogram template_histogram(const LdsModel& model, const Eigen::VectorXd& x,
                                 const KernelSpec& kernel, const BinningSpec& binning) {
  return template_pass(model, x, kernel, binning, false).histogram;
}

Eigen::VectorXd root_histogram(const Eigen::VectorXd& zeta) {
  const double root_floor = std::sqrt(kEmptyBinFloor);
  Eigen::VectorXd out(zeta.size());
  for (Eigen::Index u = 0; u < zeta.size(); ++u) {
    out(u) = zeta(u) >= kEmptyBinFloor ? std::sqrt(zeta(u))
                                       : 0.5 * root_floor + zeta(u) / (2.0 * root_floor);
  }
  return out;
}

Eigen::MatrixXd sqrt_histogram_jacobian(const HistogramJacobian& hj) {
  const Eigen::VectorXd inv_root =
      hj.histogram.values.cwiseMax(kEmptyBinFloor).cwiseSqrt().cwiseInverse();
  return 0.5 * inv_root.asDiagonal() * hj.jacobian;
}

Eigen::MatrixXd location_jacobian_L(const Frame& frame, const Eigen::Vector2d& location,
                                    const TemplateGeometry& geometry, const KernelSpec& kernel,
                                    const BinningSpec& binning, double sigma_H2) {
  const auto hj = window_histogram_jacobian(frame, location, geometry, kernel, binning);
  return sqrt_histogram_jacobian(hj) / sigma_H2;
}

Eigen::MatrixXd state_jacobian_M(const LdsModel& model, const Eigen::VectorXd& x,
                                 const KernelSpec& kernel, const BinningSpec& binning,
                                 double sigma_H2) {
  const auto hj = template_histogram_jacobian(model, x, kernel, binning);
  return sqrt_histogram_jacobian(hj) / sigma_H2;
}

}  // namespace dyntrack

#pragma once

#include "dyntrack/image.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dyntrack {

/// Dynamic template: x_t = A x_{t-1} + B v_t,  I_t = mu + C x_t + w_t,  Q = B B^T.
///
/// R is the scalar observation noise variance (the observation covariance is R * I).
struct LdsModel {
  Eigen::VectorXd mu;
  Eigen::MatrixXd A;
  Eigen::MatrixXd C;
  Eigen::MatrixXd Q;
  double R = 0.0;
  TemplateGeometry geometry;

  int order() const { return static_cast<int>(A.rows()); }
};

/// Throws Error on inconsistent dimensions, asymmetric or indefinite Q.
void validate(const LdsModel& model);

using StateSequence = std::vector<Eigen::VectorXd>;

struct SimulationOptions {
  bool process_noise = true;
  double obs_noise_sigma = 0.0;
  /// Clamp intensities to [0, 1] (display form). Raw values otherwise.
  bool clamp = false;
  /// Overrides the default x_0 ~ N(0, Q).
  std::optional<Eigen::VectorXd> initial_state;
};

struct Simulation {
  FrameSequence templates;  ///< I_1 .. I_T as rows x cols patches
  StateSequence states;     ///< x_1 .. x_T
  Eigen::VectorXd initial_state;
};

Simulation simulate(const LdsModel& model, int frames, std::uint64_t seed,
                    const SimulationOptions& options = {});

struct Identification {
  LdsModel model;
  StateSequence states;  ///< columns of Sigma V^T
  int requested_order = 0;
  std::vector<std::string> diagnostics;
};

/// Subspace identification from a sequence of equally sized patches.
///
/// mu is the sample mean, C the leading left singular vectors of the centered
/// data, A the least-squares transition fitted with an intercept (centering
/// shifts the states by their mean) and Q the covariance of the one-step
/// residuals x_{t+1} - A x_t - b. The order is reduced to the numerical rank
/// (singular values below 1e-10 * max(sigma_max, |data|_F)) when the data cannot support it.
Identification identify(const FrameSequence& patches, int order);
Identification identify(const std::vector<Eigen::VectorXd>& patches,
                        const TemplateGeometry& geometry, int order);

/// Least-squares state for an observed patch: C^+ (patch - mu).
Eigen::VectorXd init_state(const LdsModel& model, const Eigen::VectorXd& patch);

/// mu + C x
Eigen::VectorXd predict_template(const LdsModel& model, const Eigen::VectorXd& x);

/// Resamples mu and the basis images of C to `target` (bilinear), optionally
/// mirrored left-right. C is re-orthonormalized by a thin QR, C' = Q_c R_c, and
/// the triangular factor is carried into the state coordinates
/// (A' = R_c A R_c^-1, Q' = R_c Q R_c^T) so mu' + C' x' reproduces the
/// resampled template process exactly.
LdsModel transform_model(const LdsModel& model, const TemplateGeometry& target,
                         bool reflect_horizontal);

// Linear-algebra helpers shared across modules.

/// Symmetric square root with negative eigenvalues clamped to zero: B B^T = Q.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& Q);

/// SVD pseudo-inverse; singular values below rel_tol * sigma_max count as zero.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& M, double rel_tol = 1e-10);

/// Inverse of a PSD covariance with eigenvalues floored at 1e-8 * trace / n.
/// A zero matrix has no scale and yields the zero pseudo-inverse; `diagnostic`
/// is set whenever flooring or the pseudo-inverse fallback was needed.
Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& Q, std::string* diagnostic = nullptr);

double spectral_radius(const Eigen::MatrixXd& A);

/// Solution S of S = A S A^T + W for spectral radius < 1.
Eigen::MatrixXd discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W);

}  // namespace dyntrack

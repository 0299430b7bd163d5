#pragma once

#include "dyntrack/lds.hpp"
#include "dyntrack/tracker.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dyntrack {

/// Observation model shared by the EKF and particle filter.
///
/// Kernel mode observes h(x) = sqrt(zeta(mu + C x)) with covariance sigma_H^2 I;
/// identity mode observes h(x) = mu + C x with covariance R I.
struct ObservationModel {
  FeatureKind feature = FeatureKind::kKernelHistogram;
  BinningSpec binning;
  double sigma_H2 = 0.01;
  double identity_R = 0.0;  ///< <= 0 uses the model's R

  double variance(const LdsModel& model) const;
};

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

struct ParticleSet {
  std::vector<Eigen::VectorXd> particles;
  Eigen::VectorXd weights;

  Eigen::VectorXd mean() const;
  double effective_size() const;
};

/// Feature vector the filters compare against: sqrt of the patch histogram, or the patch.
Eigen::VectorXd observe(const Eigen::VectorXd& patch, const LdsModel& model,
                        const ObservationModel& obs);

/// Predict through (A, Q), then update on the observed patch with the linearized h.
GaussianBelief ekf_step(const GaussianBelief& belief, const Eigen::VectorXd& patch,
                        const LdsModel& model, const ObservationModel& obs,
                        std::vector<std::string>* diagnostics = nullptr);

/// Condensation step: propagate, weight by exp(-observation term), normalize, and
/// resample systematically when the effective sample size drops below P / 2.
/// `step` is mixed into the seed so each time step draws independent noise.
ParticleSet pf_step(const ParticleSet& particles, const Eigen::VectorXd& patch,
                    const LdsModel& model, const ObservationModel& obs, std::uint64_t seed,
                    std::uint64_t step = 0, std::vector<std::string>* diagnostics = nullptr);

/// Systematic resampling to equal weights.
ParticleSet systematic_resample(const ParticleSet& particles, double offset);

enum class Estimator { kDkSsd, kEkf, kPf };

Estimator parse_estimator(const std::string& name);
std::string to_string(Estimator method);

struct EstimatorConfig {
  TrackerConfig tracker;
  int particles = 100;
  std::uint64_t seed = 0;
};

struct StateEstimate {
  StateSequence estimates;     ///< x_hat_0 .. x_hat_T
  std::vector<double> errors;  ///< |x_hat_t - x_t|, t = 0 .. T
  /// k * sqrt(trace Q), k = 1, 2, 3: root-mean-square norm of B v_t and its multiples.
  std::array<double, 3> noise_bands{};
  std::vector<std::string> diagnostics;
};

/// Noise bands k * sqrt(trace Q).
std::array<double, 3> noise_bands(const LdsModel& model);

/// State estimation at a known, fixed location. `patches[t]` is the window observed
/// at frame t (t = 0 .. T), `truth[t]` the generating state. The estimator starts
/// from `initial_state` at t = 0.
StateEstimate estimate_states(const std::vector<Eigen::VectorXd>& patches,
                              const StateSequence& truth, const LdsModel& model,
                              Estimator method, const Eigen::VectorXd& initial_state,
                              const EstimatorConfig& config);

}  // namespace dyntrack

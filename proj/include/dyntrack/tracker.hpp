#pragma once

#include "dyntrack/features.hpp"
#include "dyntrack/lds.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dyntrack {

enum class FeatureKind { kKernelHistogram, kIdentity };

/// How the descent direction is formed from the gradient.
enum class DescentDirection {
  kGaussNewton,  ///< gradient preconditioned by the damped Gauss-Newton Hessian
  kGradient,     ///< raw gradient
};

struct ArmijoConfig {
  double initial_step = 1.0;
  double backtrack = 0.5;
  double sufficient_decrease = 1e-4;
  int max_backtracks = 30;
};

struct TrackerConfig {
  double sigma_H2 = 0.01;
  int max_iters = 200;
  double grad_tol = 1e-6;
  double rel_tol = 1e-10;
  ArmijoConfig armijo;
  FeatureKind feature = FeatureKind::kKernelHistogram;
  DescentDirection direction = DescentDirection::kGaussNewton;
  BinningSpec binning;
  /// Observation variance for the identity feature; <= 0 uses the model's R.
  double identity_R = 0.0;
  /// Freeze the location and estimate the state only.
  bool optimize_location = true;
  /// Keep per-iteration objective values and locations in TrackState.
  bool record_trace = false;
};

void validate(const TrackerConfig& config);

struct TrackState {
  Eigen::Vector2d location = Eigen::Vector2d::Zero();
  Eigen::VectorXd state;
  double objective = 0.0;
  int iterations = 0;
  bool clamped = false;
  bool converged = false;
  std::vector<double> objective_trace;
  std::vector<Eigen::Vector2d> location_trace;
};

struct TrackResult {
  /// Frame 0 carries the initialization (given location, pseudo-inverse state).
  std::vector<TrackState> frames;
  /// Mean objective over the tracked frames t >= 1 (frame 0 alone if T = 1).
  double mean_objective = 0.0;
  std::string model_id;
  std::vector<std::string> diagnostics;

  bool any_clamped() const;
  std::vector<Eigen::Vector2d> locations() const;
};

/// Objective for one frame given the previous state estimate:
///   1/(2 s) |f(l) - g(x)|^2 + 1/2 (x - A x_prev)^T Q^-1 (x - A x_prev)
/// with (f, g, s) = (sqrt zeta(y(l)), sqrt zeta(mu + C x), sigma_H^2) for the kernel
/// histogram and (y(l), mu + C x, R) for the identity feature. The square root is
/// root_histogram, which departs from sqrt only on bins below the empty-bin floor.
///
/// Holds references to the frame, model and config; they must outlive it.
class FrameObjective {
 public:
  FrameObjective(const Frame& frame, const LdsModel& model, const Eigen::VectorXd& prev_state,
                 const TrackerConfig& config);

  struct Linearization {
    double value = 0.0;
    Eigen::VectorXd gradient;  ///< stacked (g_loc, g_x)
    Eigen::MatrixXd gauss_newton;
  };

  double value(const Eigen::Vector2d& location, const Eigen::VectorXd& x) const;
  /// The observation term alone.
  double reconstruction(const Eigen::Vector2d& location, const Eigen::VectorXd& x) const;
  Linearization linearize(const Eigen::Vector2d& location, const Eigen::VectorXd& x) const;

  const LocationBounds& bounds() const { return bounds_; }
  const std::string& diagnostic() const { return diagnostic_; }

 private:
  struct Residual {
    Eigen::VectorXd r;
    Eigen::MatrixXd d_loc;    ///< d f / d l
    Eigen::MatrixXd d_state;  ///< d g / d x
  };
  Residual residual(const Eigen::Vector2d& location, const Eigen::VectorXd& x,
                    bool jacobian) const;
  double scale() const;

  const Frame& frame_;
  const LdsModel& model_;
  const TrackerConfig& config_;
  KernelSpec kernel_;
  Eigen::VectorXd prediction_;
  Eigen::MatrixXd q_inverse_;
  LocationBounds bounds_;
  std::string diagnostic_;
  // sqrt of the window histogram at the last location evaluated without Jacobians.
  mutable std::optional<Eigen::Vector2d> cached_location_;
  mutable std::optional<Eigen::VectorXd> cached_root_;
};

double objective(const Frame& frame, const Eigen::Vector2d& location, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& prev_state, const LdsModel& model,
                 const TrackerConfig& config);

/// (g_loc, g_x) = (L^T a, -M^T a + d) for the kernel histogram.
std::pair<Eigen::Vector2d, Eigen::VectorXd> gradient(const Frame& frame,
                                                     const Eigen::Vector2d& location,
                                                     const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& prev_state,
                                                     const LdsModel& model,
                                                     const TrackerConfig& config);

/// Armijo descent on the stacked (location, state) vector from (init_location, init_state).
TrackState solve_frame(const Frame& frame, const Eigen::Vector2d& init_location,
                       const Eigen::VectorXd& init_state, const Eigen::VectorXd& prev_state,
                       const LdsModel& model, const TrackerConfig& config);

/// Pseudo-inverse state at the initial location, then warm-started descent per frame.
TrackResult track_sequence(const FrameSequence& frames, const LdsModel& model,
                           const Eigen::Vector2d& initial_location, const TrackerConfig& config);

}  // namespace dyntrack

#pragma once

#include "dyntrack/lds.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace dyntrack {

struct ForegroundSpec {
  int order = 5;
  TemplateGeometry geometry{21, 21};
  double spectral_radius = 0.9;
  /// Stationary per-pixel standard deviation of C x; sets Q = q I.
  double output_std = 0.05;
  std::uint64_t seed = 1;
};

enum class BackgroundKind { kStatic, kLds };

struct BackgroundSpec {
  BackgroundKind kind = BackgroundKind::kStatic;
  int order = 5;  ///< LDS background only
  double spectral_radius = 0.9;
  double output_std = 0.05;
  /// Intensity range of the static image, or of the LDS background's mean.
  double low = 0.0;
  double high = 0.4;
  std::uint64_t seed = 2;
};

enum class TrajectoryKind { kConstantVelocity, kSinusoidal, kRandomWalk };

/// c(t) = start + t * velocity (+ amplitude .* sin(2 pi t / period) for sinusoidal);
/// a random walk adds N(0, step_std^2) per axis and frame instead.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kConstantVelocity;
  Eigen::Vector2d start{15.0, 15.0};
  Eigen::Vector2d velocity{0.7071067811865476, 0.7071067811865476};
  Eigen::Vector2d amplitude{0.0, 0.0};
  double period = 50.0;
  double step_std = 1.0;
  std::uint64_t seed = 3;
};

struct ScenarioSpec {
  ForegroundSpec foreground;
  BackgroundSpec background;
  TrajectorySpec trajectory;
  int frame_rows = 101;
  int frame_cols = 101;
  int frames = 100;
  double sigma_Y = 0.02;
  /// Drives the foreground states and the pixel noise.
  std::uint64_t seed = 0;
};

void validate(const ScenarioSpec& spec);

struct GroundTruth {
  std::vector<Eigen::Vector2d> centers;           ///< exact real-valued centers
  std::vector<Eigen::Vector2d> rendered_centers;  ///< centers of the integer placement
  StateSequence states;                           ///< state of the template shown in each frame
  Eigen::VectorXd initial_state;
  LdsModel model;
};

struct Scenario {
  FrameSequence frames;
  GroundTruth truth;
};

/// Smooth random image in [lo, hi]: uniform values on a coarse grid, bilinearly upsampled.
Frame smooth_image(int rows, int cols, std::uint64_t seed, double lo = 0.2, double hi = 0.8);

/// A rescaled to spectral radius rho, orthonormal C, smooth mu in [0.2, 0.8], and
/// Q = q I with q chosen so the stationary per-pixel std of C x is `output_std`.
LdsModel random_model(int order, const TemplateGeometry& geometry, double spectral_radius,
                      std::uint64_t seed, double output_std = 0.05);
LdsModel random_model(const ForegroundSpec& spec);

std::vector<Eigen::Vector2d> trajectory_centers(const TrajectorySpec& spec, int frames);

/// Renders the scenario with the foreground drawn from random_model(spec.foreground).
Scenario composite_sequence(const ScenarioSpec& spec);
/// Same, with a given generator model (its geometry replaces spec.foreground.geometry).
Scenario composite_sequence(const ScenarioSpec& spec, const LdsModel& foreground);

/// Patches at the rendered centers, frames 0 .. T-1.
std::vector<Eigen::VectorXd> truth_patches(const Scenario& scenario);

BackgroundKind parse_background(const std::string& name);
std::string to_string(BackgroundKind kind);
TrajectoryKind parse_trajectory(const std::string& name);
std::string to_string(TrajectoryKind kind);

}  // namespace dyntrack

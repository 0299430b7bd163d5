#include "dyntrack/synth.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>
#include <random>

namespace dyntrack {

namespace {

Eigen::MatrixXd gaussian_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = normal(rng);
  }
  return M;
}

// Top-left pixel of the integer placement for a real center.
Eigen::Vector2i top_left(const Eigen::Vector2d& center, const TemplateGeometry& g) {
  return {static_cast<int>(std::lround(center.x() - 0.5 * (g.cols - 1))),
          static_cast<int>(std::lround(center.y() - 0.5 * (g.rows - 1)))};
}

}  // namespace

void validate(const ScenarioSpec& spec) {
  const ForegroundSpec& fg = spec.foreground;
  validate(fg.geometry);
  if (fg.order < 1) throw Error("foreground order must be positive");
  if (!(fg.spectral_radius > 0 && fg.spectral_radius < 1)) {
    throw Error("foreground spectral radius must be in (0, 1)");
  }
  if (!(fg.output_std >= 0)) throw Error("foreground output_std must be nonnegative");
  if (spec.background.kind == BackgroundKind::kLds) {
    if (spec.background.order < 1) throw Error("background order must be positive");
    if (!(spec.background.spectral_radius > 0 && spec.background.spectral_radius < 1)) {
      throw Error("background spectral radius must be in (0, 1)");
    }
  }
  if (spec.frames < 1) throw Error("scenario needs at least one frame");
  if (spec.frame_rows < fg.geometry.rows || spec.frame_cols < fg.geometry.cols) {
    throw Error("frame is smaller than the foreground patch");
  }
  if (!(spec.background.low <= spec.background.high)) {
    throw Error("background intensity range is empty");
  }
  if (!(spec.sigma_Y >= 0)) throw Error("sigma_Y must be nonnegative");
  if (spec.trajectory.kind == TrajectoryKind::kSinusoidal && !(spec.trajectory.period > 0)) {
    throw Error("sinusoidal trajectory needs a positive period");
  }
  if (spec.trajectory.kind == TrajectoryKind::kRandomWalk && !(spec.trajectory.step_std >= 0)) {
    throw Error("random-walk step_std must be nonnegative");
  }
}

Frame smooth_image(int rows, int cols, std::uint64_t seed, double lo, double hi) {
  if (rows < 1 || cols < 1) throw Error("smooth_image needs a positive size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const int gr = std::max(2, rows / 5);
  const int gc = std::max(2, cols / 5);
  Frame coarse(gr, gc);
  for (int c = 0; c < gc; ++c) {
    for (int r = 0; r < gr; ++r) coarse(r, c) = uniform(rng);
  }
  Frame img = resample_bilinear(coarse, rows, cols);
  const double mn = img.minCoeff();
  const double span = img.maxCoeff() - mn;
  if (span <= 0) return Frame::Constant(rows, cols, 0.5 * (lo + hi));
  return ((img.array() - mn) * ((hi - lo) / span) + lo).matrix();
}

LdsModel random_model(int order, const TemplateGeometry& geometry, double radius,
                      std::uint64_t seed, double output_std) {
  validate(geometry);
  if (order < 1 || order > geometry.size()) throw Error("random_model order out of range");
  if (!(radius > 0 && radius < 1)) {
    throw Error("random_model spectral radius must be in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  LdsModel m;
  m.geometry = geometry;

  double rho = 0;
  while (!(rho > 1e-8)) {
    m.A = gaussian_matrix(rng, order, order);
    rho = spectral_radius(m.A);
  }
  m.A *= radius / rho;

  // Columns are smooth Gaussian fields so the basis images move whole regions coherently.
  int gr = std::max(2, geometry.rows / 5);
  int gc = std::max(2, geometry.cols / 5);
  while (gr * gc < order) {
    gr = std::min(gr + 1, geometry.rows);
    gc = std::min(gc + 1, geometry.cols);
  }
  const Eigen::MatrixXd coarse = gaussian_matrix(rng, gr * gc, order);
  Eigen::MatrixXd G(geometry.size(), order);
  for (int i = 0; i < order; ++i) {
    const Frame grid = Eigen::Map<const Frame>(coarse.col(i).data(), gr, gc);
    G.col(i) = stack(resample_bilinear(grid, geometry.rows, geometry.cols));
  }
  m.C = Eigen::HouseholderQR<Eigen::MatrixXd>(G).householderQ() *
        Eigen::MatrixXd::Identity(geometry.size(), order);

  m.mu = stack(smooth_image(geometry.rows, geometry.cols, rng()));

  // Stationary covariance of x under Q = I is S; Var(C x) per pixel averages q tr(S) / N.
  const Eigen::MatrixXd S = discrete_lyapunov(m.A, Eigen::MatrixXd::Identity(order, order));
  const double q = output_std * output_std * geometry.size() / S.trace();
  m.Q = q * Eigen::MatrixXd::Identity(order, order);
  m.R = 1e-4;
  return m;
}

LdsModel random_model(const ForegroundSpec& spec) {
  return random_model(spec.order, spec.geometry, spec.spectral_radius, spec.seed, spec.output_std);
}

std::vector<Eigen::Vector2d> trajectory_centers(const TrajectorySpec& spec, int frames) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(frames);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, spec.step_std);
  Eigen::Vector2d c = spec.start;
  for (int t = 0; t < frames; ++t) {
    switch (spec.kind) {
      case TrajectoryKind::kConstantVelocity:
        c = spec.start + t * spec.velocity;
        break;
      case TrajectoryKind::kSinusoidal:
        c = spec.start + t * spec.velocity +
            spec.amplitude * std::sin(2 * std::numbers::pi * t / spec.period);
        break;
      case TrajectoryKind::kRandomWalk:
        if (t > 0) {
          const double dx = normal(rng);
          c += Eigen::Vector2d(dx, normal(rng));
        }
        break;
    }
    out.push_back(c);
  }
  return out;
}

Scenario composite_sequence(const ScenarioSpec& spec) {
  validate(spec);
  return composite_sequence(spec, random_model(spec.foreground));
}

Scenario composite_sequence(const ScenarioSpec& spec, const LdsModel& foreground) {
  ScenarioSpec s = spec;
  s.foreground.geometry = foreground.geometry;
  s.foreground.order = foreground.order();
  validate(s);
  validate(foreground);
  const TemplateGeometry& g = foreground.geometry;

  Scenario out;
  out.truth.model = foreground;
  out.truth.centers = trajectory_centers(s.trajectory, s.frames);
  for (std::size_t t = 0; t < out.truth.centers.size(); ++t) {
    const Eigen::Vector2i tl = top_left(out.truth.centers[t], g);
    if (tl.x() < 0 || tl.y() < 0 || tl.x() + g.cols > s.frame_cols ||
        tl.y() + g.rows > s.frame_rows) {
      throw Error("trajectory leaves the frame at t = " + std::to_string(t) + " (center " +
                  std::to_string(out.truth.centers[t].x()) + ", " +
                  std::to_string(out.truth.centers[t].y()) + ")");
    }
    out.truth.rendered_centers.push_back(
        tl.cast<double>() + 0.5 * Eigen::Vector2d(g.cols - 1, g.rows - 1));
  }

  const Simulation fg = simulate(foreground, s.frames, s.seed);
  out.truth.states = fg.states;
  out.truth.initial_state = fg.initial_state;

  Frame still;
  Simulation bg;
  if (s.background.kind == BackgroundKind::kStatic) {
    still = smooth_image(s.frame_rows, s.frame_cols, s.background.seed, s.background.low,
                         s.background.high);
  } else {
    LdsModel bg_model =
        random_model(s.background.order, TemplateGeometry{s.frame_rows, s.frame_cols},
                     s.background.spectral_radius, s.background.seed, s.background.output_std);
    bg_model.mu = stack(smooth_image(s.frame_rows, s.frame_cols, s.background.seed + 2,
                                     s.background.low, s.background.high));
    bg = simulate(bg_model, s.frames, s.background.seed + 1);
  }

  std::seed_seq noise_seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                          0x6e6f6973u};
  std::mt19937_64 noise_rng(noise_seq);
  std::normal_distribution<double> noise(0.0, s.sigma_Y);

  out.frames.reserve(s.frames);
  for (int t = 0; t < s.frames; ++t) {
    Frame f = s.background.kind == BackgroundKind::kStatic ? still : bg.templates[t];
    const Eigen::Vector2i tl = top_left(out.truth.centers[t], g);
    f.block(tl.y(), tl.x(), g.rows, g.cols) = fg.templates[t];
    if (s.sigma_Y > 0) {
      for (Eigen::Index c = 0; c < f.cols(); ++c) {
        for (Eigen::Index r = 0; r < f.rows(); ++r) f(r, c) += noise(noise_rng);
      }
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

std::vector<Eigen::VectorXd> truth_patches(const Scenario& scenario) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(scenario.frames.size());
  for (std::size_t t = 0; t < scenario.frames.size(); ++t) {
    out.push_back(extract_patch(scenario.frames[t], scenario.truth.rendered_centers[t],
                                scenario.truth.model.geometry));
  }
  return out;
}

BackgroundKind parse_background(const std::string& name) {
  if (name == "static") return BackgroundKind::kStatic;
  if (name == "lds") return BackgroundKind::kLds;
  throw Error("unknown background kind '" + name + "' (expected static or lds)");
}

std::string to_string(BackgroundKind kind) {
  return kind == BackgroundKind::kStatic ? "static" : "lds";
}

TrajectoryKind parse_trajectory(const std::string& name) {
  if (name == "constant-velocity") return TrajectoryKind::kConstantVelocity;
  if (name == "sinusoidal") return TrajectoryKind::kSinusoidal;
  if (name == "random-walk") return TrajectoryKind::kRandomWalk;
  throw Error("unknown trajectory kind '" + name +
              "' (expected constant-velocity, sinusoidal or random-walk)");
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kConstantVelocity: return "constant-velocity";
    case TrajectoryKind::kSinusoidal: return "sinusoidal";
    case TrajectoryKind::kRandomWalk: return "random-walk";
  }
  return "unknown";
}

}  // namespace dyntrack

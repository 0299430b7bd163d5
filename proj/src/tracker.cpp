#include "dyntrack/tracker.hpp"

#include <cmath>
#include <limits>

namespace dyntrack {

void validate(const TrackerConfig& config) {
  if (!(config.sigma_H2 > 0)) throw Error("sigma_H2 must be positive");
  if (config.max_iters < 0) throw Error("max_iters must be nonnegative");
  if (!(config.grad_tol >= 0) || !(config.rel_tol >= 0)) throw Error("tolerances must be >= 0");
  const ArmijoConfig& a = config.armijo;
  if (!(a.initial_step > 0)) throw Error("armijo initial step must be positive");
  if (!(a.backtrack > 0 && a.backtrack < 1)) throw Error("armijo backtrack factor must be in (0,1)");
  if (!(a.sufficient_decrease > 0 && a.sufficient_decrease < 1)) {
    throw Error("armijo sufficient-decrease constant must be in (0,1)");
  }
  if (a.max_backtracks < 0) throw Error("armijo max_backtracks must be nonnegative");
  validate(config.binning);
}

bool TrackResult::any_clamped() const {
  for (const auto& f : frames) {
    if (f.clamped) return true;
  }
  return false;
}

std::vector<Eigen::Vector2d> TrackResult::locations() const {
  std::vector<Eigen::Vector2d> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.location);
  return out;
}

FrameObjective::FrameObjective(const Frame& frame, const LdsModel& model,
                               const Eigen::VectorXd& prev_state, const TrackerConfig& config)
    : frame_(frame),
      model_(model),
      config_(config),
      kernel_(kernel_for(model.geometry)),
      bounds_(valid_locations(model.geometry, frame.rows(), frame.cols())) {
  if (prev_state.size() != model.order()) {
    throw Error("previous state has dimension " + std::to_string(prev_state.size()) +
                ", model order is " + std::to_string(model.order()));
  }
  prediction_ = model.A * prev_state;
  q_inverse_ = regularized_inverse(model.Q, &diagnostic_);
}

double FrameObjective::scale() const {
  if (config_.feature == FeatureKind::kKernelHistogram) return config_.sigma_H2;
  const double R = config_.identity_R > 0 ? config_.identity_R : model_.R;
  return std::max(R, 1e-12);
}

FrameObjective::Residual FrameObjective::residual(const Eigen::Vector2d& location,
                                                  const Eigen::VectorXd& x, bool jacobian) const {
  if (x.size() != model_.order()) {
    throw Error("state has dimension " + std::to_string(x.size()) + ", model order is " +
                std::to_string(model_.order()));
  }
  Residual out;
  if (config_.feature == FeatureKind::kKernelHistogram) {
    if (jacobian) {
      const auto observed =
          window_histogram_jacobian(frame_, location, model_.geometry, kernel_, config_.binning);
      const auto predicted = template_histogram_jacobian(model_, x, kernel_, config_.binning);
      out.r = root_histogram(observed.histogram.values) -
              root_histogram(predicted.histogram.values);
      out.d_loc = sqrt_histogram_jacobian(observed);
      out.d_state = sqrt_histogram_jacobian(predicted);
    } else {
      if (!cached_root_ || *cached_location_ != location) {
        cached_root_ = root_histogram(
            window_histogram(frame_, location, model_.geometry, kernel_, config_.binning).values);
        cached_location_ = location;
      }
      out.r = *cached_root_ -
              root_histogram(template_histogram(model_, x, kernel_, config_.binning).values);
    }
  } else {
    out.r = extract_patch(frame_, location, model_.geometry) - predict_template(model_, x);
    if (jacobian) {
      out.d_loc = patch_location_jacobian(frame_, location, model_.geometry);
      out.d_state = model_.C;
    }
  }
  return out;
}

double FrameObjective::reconstruction(const Eigen::Vector2d& location,
                                      const Eigen::VectorXd& x) const {
  return 0.5 * residual(location, x, false).r.squaredNorm() / scale();
}

double FrameObjective::value(const Eigen::Vector2d& location, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd d = x - prediction_;
  return reconstruction(location, x) + 0.5 * d.dot(q_inverse_ * d);
}

FrameObjective::Linearization FrameObjective::linearize(const Eigen::Vector2d& location,
                                                        const Eigen::VectorXd& x) const {
  const Residual res = residual(location, x, true);
  const double s = scale();
  const Eigen::Index n = x.size();
  const Eigen::VectorXd d = x - prediction_;
  const Eigen::VectorXd qd = q_inverse_ * d;

  Linearization lin;
  lin.value = 0.5 * res.r.squaredNorm() / s + 0.5 * d.dot(qd);

  // Jacobian of the residual r = f(l) - g(x) with respect to (l, x).
  Eigen::MatrixXd J(res.r.size(), 2 + n);
  J.leftCols(2) = res.d_loc;
  J.rightCols(n) = -res.d_state;

  lin.gradient = J.transpose() * res.r / s;
  lin.gradient.tail(n) += qd;
  lin.gauss_newton = J.transpose() * J / s;
  lin.gauss_newton.bottomRightCorner(n, n) += q_inverse_;
  return lin;
}

double objective(const Frame& frame, const Eigen::Vector2d& location, const Eigen::VectorXd& x,
                 const Eigen::VectorXd& prev_state, const LdsModel& model,
                 const TrackerConfig& config) {
  validate(config);
  return FrameObjective(frame, model, prev_state, config).value(location, x);
}

std::pair<Eigen::Vector2d, Eigen::VectorXd> gradient(const Frame& frame,
                                                     const Eigen::Vector2d& location,
                                                     const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& prev_state,
                                                     const LdsModel& model,
                                                     const TrackerConfig& config) {
  validate(config);
  const auto lin = FrameObjective(frame, model, prev_state, config).linearize(location, x);
  return {lin.gradient.head<2>(), lin.gradient.tail(x.size())};
}

namespace {

// Descent direction over the free coordinates (first `offset` entries are frozen).
Eigen::VectorXd direction(const FrameObjective::Linearization& lin, Eigen::Index offset,
                          DescentDirection kind) {
  const Eigen::Index dim = lin.gradient.size() - offset;
  const Eigen::VectorXd g = lin.gradient.tail(dim);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(lin.gradient.size());
  if (kind == DescentDirection::kGradient) {
    d.tail(dim) = -g;
    return d;
  }
  Eigen::MatrixXd H = lin.gauss_newton.bottomRightCorner(dim, dim);
  // Relative damping per coordinate; zero diagonals get a floor tied to the largest one.
  const double floor = 1e-12 * std::max(H.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  for (Eigen::Index i = 0; i < dim; ++i) H(i, i) = std::max(H(i, i) * (1.0 + 1e-6), floor);
  Eigen::VectorXd step = H.ldlt().solve(-g);
  if (!step.allFinite() || step.dot(g) >= 0) step = -g;
  d.tail(dim) = step;
  return d;
}

}  // namespace

TrackState solve_frame(const Frame& frame, const Eigen::Vector2d& init_location,
                       const Eigen::VectorXd& init_state, const Eigen::VectorXd& prev_state,
                       const LdsModel& model, const TrackerConfig& config) {
  validate(config);
  const FrameObjective objective(frame, model, prev_state, config);
  const Eigen::Index n = model.order();
  const Eigen::Index frozen = config.optimize_location ? 0 : 2;

  TrackState st;
  st.location = init_location;
  if (config.optimize_location) {
    st.location = objective.bounds().clamp(init_location);
    st.clamped = !st.location.isApprox(init_location, 0.0);
  }
  st.state = init_state;

  auto lin = objective.linearize(st.location, st.state);
  if (config.record_trace) {
    st.objective_trace.push_back(lin.value);
    st.location_trace.push_back(st.location);
  }

  const ArmijoConfig& armijo = config.armijo;
  for (int it = 0; it < config.max_iters; ++it) {
    if (lin.gradient.tail(lin.gradient.size() - frozen).norm() <= config.grad_tol) {
      st.converged = true;
      break;
    }
    const Eigen::VectorXd d = direction(lin, frozen, config.direction);

    double step = armijo.initial_step;
    bool accepted = false;
    bool trial_clamped = false;
    Eigen::Vector2d trial_loc;
    Eigen::VectorXd trial_x;
    double trial_value = 0;
    for (int k = 0; k <= armijo.max_backtracks; ++k, step *= armijo.backtrack) {
      trial_loc = st.location + step * d.head<2>();
      trial_clamped = false;
      if (config.optimize_location) {
        const Eigen::Vector2d c = objective.bounds().clamp(trial_loc);
        trial_clamped = !c.isApprox(trial_loc, 0.0);
        trial_loc = c;
      }
      trial_x = st.state + step * d.tail(n);
      trial_value = objective.value(trial_loc, trial_x);
      // Projected Armijo test on the step actually taken.
      Eigen::VectorXd taken(2 + n);
      taken << trial_loc - st.location, trial_x - st.state;
      if (std::isfinite(trial_value) &&
          trial_value <= lin.value + armijo.sufficient_decrease * lin.gradient.dot(taken)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const double decrease = lin.value - trial_value;
    st.location = trial_loc;
    st.state = trial_x;
    st.clamped = st.clamped || trial_clamped;
    ++st.iterations;
    lin = objective.linearize(st.location, st.state);
    if (config.record_trace) {
      st.objective_trace.push_back(lin.value);
      st.location_trace.push_back(st.location);
    }
    if (decrease <= config.rel_tol * std::max(std::abs(trial_value), 1e-300)) {
      st.converged = true;
      break;
    }
  }
  st.objective = lin.value;
  return st;
}

TrackResult track_sequence(const FrameSequence& frames, const LdsModel& model,
                           const Eigen::Vector2d& initial_location, const TrackerConfig& config) {
  validate(config);
  validate(model);
  if (frames.empty()) throw Error("track_sequence needs at least one frame");
  const LocationBounds bounds = valid_locations(model.geometry, frames[0].rows(), frames[0].cols());
  if (!bounds.contains(initial_location)) {
    throw Error("initial window at (" + std::to_string(initial_location.x()) + ", " +
                std::to_string(initial_location.y()) + ") is not inside the first frame");
  }

  TrackResult result;
  TrackState first;
  first.location = initial_location;
  first.state = init_state(model, extract_patch(frames[0], initial_location, model.geometry));
  {
    const FrameObjective obj(frames[0], model, Eigen::VectorXd::Zero(model.order()), config);
    first.objective = obj.reconstruction(first.location, first.state);
    if (!obj.diagnostic().empty()) result.diagnostics.push_back(obj.diagnostic());
  }
  first.converged = true;
  result.frames.push_back(first);

  double total = 0;
  for (std::size_t t = 1; t < frames.size(); ++t) {
    if (frames[t].rows() != frames[0].rows() || frames[t].cols() != frames[0].cols()) {
      throw Error("frame " + std::to_string(t) + " has a different size than frame 0");
    }
    const TrackState& prev = result.frames.back();
    TrackState st = solve_frame(frames[t], prev.location, model.A * prev.state, prev.state, model,
                                config);
    total += st.objective;
    result.frames.push_back(std::move(st));
  }
  result.mean_objective = frames.size() > 1 ? total / static_cast<double>(frames.size() - 1)
                                            : result.frames[0].objective;
  return result;
}

}  // namespace dyntrack

#include "dyntrack/baselines.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <random>

namespace dyntrack {

namespace {

struct Linearized {
  Eigen::VectorXd value;
  Eigen::MatrixXd jacobian;
};

Linearized observation_function(const LdsModel& model, const Eigen::VectorXd& x,
                                const ObservationModel& obs, bool jacobian) {
  if (obs.feature == FeatureKind::kIdentity) {
    return {predict_template(model, x), jacobian ? model.C : Eigen::MatrixXd()};
  }
  const auto hj = template_histogram_jacobian(model, x, kernel_for(model.geometry), obs.binning);
  Linearized out{root_histogram(hj.histogram.values), Eigen::MatrixXd()};
  if (jacobian) out.jacobian = sqrt_histogram_jacobian(hj);
  return out;
}

Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace

double ObservationModel::variance(const LdsModel& model) const {
  if (feature == FeatureKind::kKernelHistogram) return sigma_H2;
  return std::max(identity_R > 0 ? identity_R : model.R, 1e-12);
}

Eigen::VectorXd ParticleSet::mean() const {
  if (particles.empty()) throw Error("empty particle set");
  Eigen::VectorXd m = Eigen::VectorXd::Zero(particles.front().size());
  for (std::size_t i = 0; i < particles.size(); ++i) m += weights(static_cast<Eigen::Index>(i)) * particles[i];
  return m;
}

double ParticleSet::effective_size() const { return 1.0 / weights.squaredNorm(); }

Eigen::VectorXd observe(const Eigen::VectorXd& patch, const LdsModel& model,
                        const ObservationModel& obs) {
  if (obs.feature == FeatureKind::kIdentity) return identity_feature(patch);
  return root_histogram(
      soft_histogram(patch, model.geometry, kernel_for(model.geometry), obs.binning).values);
}

GaussianBelief ekf_step(const GaussianBelief& belief, const Eigen::VectorXd& patch,
                        const LdsModel& model, const ObservationModel& obs,
                        std::vector<std::string>* diagnostics) {
  const Eigen::Index n = model.order();
  if (belief.mean.size() != n || belief.covariance.rows() != n || belief.covariance.cols() != n) {
    throw Error("ekf_step: belief dimension does not match the model order");
  }
  GaussianBelief prior{model.A * belief.mean,
                       model.A * belief.covariance * model.A.transpose() + model.Q};
  prior.covariance = (0.5 * (prior.covariance + prior.covariance.transpose())).eval();

  const Eigen::VectorXd y = observe(patch, model, obs);
  const Linearized h = observation_function(model, prior.mean, obs, true);
  const double s = obs.variance(model);
  const Eigen::Index m = y.size();

  Eigen::MatrixXd S = h.jacobian * prior.covariance * h.jacobian.transpose() +
                      s * Eigen::MatrixXd::Identity(m, m);
  S = (0.5 * (S + S.transpose())).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
    const double floor = std::max(1e-12, 1e-10 * eig.eigenvalues().cwiseAbs().maxCoeff());
    S = eig.eigenvectors() * eig.eigenvalues().cwiseMax(floor).asDiagonal() *
        eig.eigenvectors().transpose();
    llt.compute(S);
    if (diagnostics) diagnostics->push_back("ekf: innovation covariance floored to stay PSD");
  }
  // K = P H^T S^-1
  const Eigen::MatrixXd PHt = prior.covariance * h.jacobian.transpose();
  const Eigen::MatrixXd K = llt.solve(PHt.transpose()).transpose();

  GaussianBelief post;
  post.mean = prior.mean + K * (y - h.value);
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * h.jacobian;
  post.covariance = IKH * prior.covariance * IKH.transpose() + s * K * K.transpose();
  post.covariance = (0.5 * (post.covariance + post.covariance.transpose())).eval();
  return post;
}

ParticleSet systematic_resample(const ParticleSet& set, double offset) {
  const std::size_t P = set.particles.size();
  ParticleSet out;
  out.particles.reserve(P);
  out.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(P), 1.0 / static_cast<double>(P));
  double cumulative = set.weights(0);
  std::size_t i = 0;
  for (std::size_t k = 0; k < P; ++k) {
    const double u = (static_cast<double>(k) + offset) / static_cast<double>(P);
    while (u > cumulative && i + 1 < P) cumulative += set.weights(static_cast<Eigen::Index>(++i));
    out.particles.push_back(set.particles[i]);
  }
  return out;
}

ParticleSet pf_step(const ParticleSet& set, const Eigen::VectorXd& patch, const LdsModel& model,
                    const ObservationModel& obs, std::uint64_t seed, std::uint64_t step,
                    std::vector<std::string>* diagnostics) {
  const std::size_t P = set.particles.size();
  if (P == 0) throw Error("pf_step needs at least one particle");
  if (set.weights.size() != static_cast<Eigen::Index>(P)) throw Error("pf_step: weight count mismatch");

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32)};
  std::mt19937_64 rng(seq);
  const Eigen::MatrixXd B = psd_sqrt(model.Q);
  const Eigen::VectorXd y = observe(patch, model, obs);
  const double s = obs.variance(model);

  ParticleSet out;
  out.particles.reserve(P);
  Eigen::VectorXd log_w(static_cast<Eigen::Index>(P));
  for (std::size_t i = 0; i < P; ++i) {
    Eigen::VectorXd x = model.A * set.particles[i] + B * gaussian_vector(rng, model.order());
    const Eigen::VectorXd r = y - observation_function(model, x, obs, false).value;
    log_w(static_cast<Eigen::Index>(i)) =
        std::log(set.weights(static_cast<Eigen::Index>(i))) - 0.5 * r.squaredNorm() / s;
    out.particles.push_back(std::move(x));
  }

  const double max_log = log_w.maxCoeff();
  if (!std::isfinite(max_log)) {
    out.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(P), 1.0 / static_cast<double>(P));
    if (diagnostics) diagnostics->push_back("pf: all particle weights vanished; reset to uniform");
    return out;
  }
  out.weights = (log_w.array() - max_log).exp().matrix();
  out.weights /= out.weights.sum();

  if (out.effective_size() < 0.5 * static_cast<double>(P)) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    out = systematic_resample(out, uniform(rng));
  }
  return out;
}

Estimator parse_estimator(const std::string& name) {
  if (name == "dk-ssd") return Estimator::kDkSsd;
  if (name == "ekf") return Estimator::kEkf;
  if (name == "pf") return Estimator::kPf;
  throw Error("unknown estimation method '" + name + "' (expected dk-ssd, ekf or pf)");
}

std::string to_string(Estimator method) {
  switch (method) {
    case Estimator::kDkSsd: return "dk-ssd";
    case Estimator::kEkf: return "ekf";
    case Estimator::kPf: return "pf";
  }
  return "unknown";
}

std::array<double, 3> noise_bands(const LdsModel& model) {
  const double std1 = std::sqrt(std::max(model.Q.trace(), 0.0));
  return {std1, 2 * std1, 3 * std1};
}

StateEstimate estimate_states(const std::vector<Eigen::VectorXd>& patches,
                              const StateSequence& truth, const LdsModel& model,
                              Estimator method, const Eigen::VectorXd& initial_state,
                              const EstimatorConfig& config) {
  validate(model);
  if (patches.empty()) throw Error("estimate_states needs at least one observation");
  if (truth.size() != patches.size()) {
    throw Error("estimate_states: " + std::to_string(truth.size()) + " true states for " +
                std::to_string(patches.size()) + " observations");
  }
  if (initial_state.size() != model.order()) throw Error("initial state has the wrong dimension");
  if (config.particles < 1) throw Error("particle filter needs at least one particle");

  StateEstimate out;
  out.noise_bands = noise_bands(model);
  out.estimates.push_back(initial_state);

  const ObservationModel obs{config.tracker.feature, config.tracker.binning,
                             config.tracker.sigma_H2, config.tracker.identity_R};
  TrackerConfig tracker = config.tracker;
  tracker.optimize_location = false;
  const Eigen::Vector2d center = 0.5 * Eigen::Vector2d(model.geometry.cols - 1, model.geometry.rows - 1);

  GaussianBelief belief{initial_state, model.Q};
  ParticleSet particles;
  if (method == Estimator::kPf) {
    std::mt19937_64 rng(config.seed);
    const Eigen::MatrixXd B = psd_sqrt(model.Q);
    for (int p = 0; p < config.particles; ++p) {
      particles.particles.push_back(initial_state + B * gaussian_vector(rng, model.order()));
    }
    particles.weights = Eigen::VectorXd::Constant(config.particles, 1.0 / config.particles);
  }

  for (std::size_t t = 1; t < patches.size(); ++t) {
    const Eigen::VectorXd& prev = out.estimates.back();
    switch (method) {
      case Estimator::kDkSsd: {
        const Frame frame = unstack(patches[t], model.geometry);
        const TrackState st = solve_frame(frame, center, model.A * prev, prev, model, tracker);
        out.estimates.push_back(st.state);
        break;
      }
      case Estimator::kEkf:
        belief = ekf_step(belief, patches[t], model, obs, &out.diagnostics);
        out.estimates.push_back(belief.mean);
        break;
      case Estimator::kPf:
        particles = pf_step(particles, patches[t], model, obs, config.seed, t, &out.diagnostics);
        out.estimates.push_back(particles.mean());
        break;
    }
  }
  out.errors.reserve(patches.size());
  for (std::size_t t = 0; t < patches.size(); ++t) {
    out.errors.push_back((out.estimates[t] - truth[t]).norm());
  }
  return out;
}

}  // namespace dyntrack

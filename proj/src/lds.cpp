#include "dyntrack/lds.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <random>

namespace dyntrack {

namespace {

constexpr double kRankTolerance = 1e-10;

Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

void check_psd(const Eigen::MatrixXd& Q, const char* name) {
  if (Q.size() == 0) return;
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, Q.cwiseAbs().maxCoeff())) {
    throw Error(std::string(name) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Q, Eigen::EigenvaluesOnly);
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < -1e-10 * std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff())) {
    throw Error(std::string(name) + " is not positive semidefinite (min eigenvalue " +
                std::to_string(min_eig) + ")");
  }
}

}  // namespace

void validate(const LdsModel& model) {
  validate(model.geometry);
  const Eigen::Index N = model.geometry.size();
  const Eigen::Index n = model.A.rows();
  if (model.mu.size() != N) {
    throw Error("mu has " + std::to_string(model.mu.size()) + " entries, geometry needs " +
                std::to_string(N));
  }
  if (model.A.cols() != n) throw Error("A must be square");
  if (model.C.rows() != N || model.C.cols() != n) {
    throw Error("C must be " + std::to_string(N) + "x" + std::to_string(n));
  }
  if (model.Q.rows() != n || model.Q.cols() != n) {
    throw Error("Q must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (!(model.R >= 0.0)) throw Error("R must be nonnegative");
  check_psd(model.Q, "Q");
}

Simulation simulate(const LdsModel& model, int frames, std::uint64_t seed,
                    const SimulationOptions& options) {
  validate(model);
  if (frames < 1) throw Error("simulate needs at least one frame");
  if (options.obs_noise_sigma < 0) throw Error("observation noise sigma must be nonnegative");
  const Eigen::Index n = model.order();

  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd B = psd_sqrt(model.Q);
  Eigen::VectorXd x;
  if (options.initial_state) {
    if (options.initial_state->size() != n) throw Error("initial state has the wrong dimension");
    x = *options.initial_state;
  } else {
    x = B * gaussian_vector(rng, n);
  }

  Simulation out;
  out.initial_state = x;
  out.templates.reserve(frames);
  out.states.reserve(frames);
  for (int t = 0; t < frames; ++t) {
    x = model.A * x;
    if (options.process_noise) x += B * gaussian_vector(rng, n);
    Eigen::VectorXd frame = model.mu + model.C * x;
    if (options.obs_noise_sigma > 0) {
      frame += options.obs_noise_sigma * gaussian_vector(rng, frame.size());
    }
    if (options.clamp) frame = frame.cwiseMax(0.0).cwiseMin(1.0);
    out.templates.push_back(unstack(frame, model.geometry));
    out.states.push_back(x);
  }
  return out;
}

Identification identify(const FrameSequence& patches, int order) {
  if (patches.empty()) throw Error("identify needs at least one patch");
  const TemplateGeometry geometry{static_cast<int>(patches.front().rows()),
                                  static_cast<int>(patches.front().cols())};
  std::vector<Eigen::VectorXd> stacked;
  stacked.reserve(patches.size());
  for (const Frame& p : patches) {
    if (p.rows() != geometry.rows || p.cols() != geometry.cols) {
      throw Error("identify: all patches must share one geometry");
    }
    stacked.push_back(stack(p));
  }
  return identify(stacked, geometry, order);
}

Identification identify(const std::vector<Eigen::VectorXd>& patches,
                        const TemplateGeometry& geometry, int order) {
  validate(geometry);
  if (order < 0) throw Error("model order must be nonnegative");
  const auto frames = static_cast<Eigen::Index>(patches.size());
  if (frames <= order) {
    throw Error("identify needs more than " + std::to_string(order) + " patches, got " +
                std::to_string(frames));
  }
  const Eigen::Index N = geometry.size();
  Eigen::MatrixXd data(N, frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    if (patches[t].size() != N) throw Error("identify: all patches must share one geometry");
    data.col(t) = patches[t];
  }

  Identification result;
  result.requested_order = order;
  LdsModel& model = result.model;
  model.geometry = geometry;
  model.mu = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - model.mu;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // Relative to the raw data as well, so rounding left by centering a constant
  // sequence does not count as signal.
  const double scale = std::max(sv.size() > 0 ? sv(0) : 0.0, data.norm());
  Eigen::Index rank = 0;
  while (rank < sv.size() && scale > 0 && sv(rank) > kRankTolerance * scale) ++rank;
  const Eigen::Index n = std::min<Eigen::Index>(order, rank);
  if (n < order) {
    result.diagnostics.push_back("data rank " + std::to_string(rank) +
                                 " is below the requested order " + std::to_string(order) +
                                 "; order reduced to " + std::to_string(n));
  }

  model.C = svd.matrixU().leftCols(n);
  const Eigen::MatrixXd X = sv.head(n).asDiagonal() * svd.matrixV().leftCols(n).transpose();
  const Eigen::MatrixXd X1 = X.leftCols(frames - 1);
  const Eigen::MatrixXd X2 = X.rightCols(frames - 1);
  // Centering on the sample mean leaves an offset (A - I) x_bar in the one-step
  // relation, so A is fitted together with an intercept that is then dropped.
  Eigen::MatrixXd Z(n + 1, frames - 1);
  Z.topRows(n) = X1;
  Z.row(n).setOnes();
  const Eigen::MatrixXd Ab = X2 * pseudo_inverse(Z, kRankTolerance);
  model.A = Ab.leftCols(n);

  const Eigen::MatrixXd V = (X2 - Ab * Z).eval();
  model.Q = (V * V.transpose()) / static_cast<double>(frames - 1);
  model.Q = (0.5 * (model.Q + model.Q.transpose())).eval();

  const Eigen::MatrixXd residual = centered - model.C * X;
  model.R = residual.squaredNorm() / static_cast<double>(N * frames);

  result.states.reserve(frames);
  for (Eigen::Index t = 0; t < frames; ++t) result.states.push_back(X.col(t));
  return result;
}

Eigen::VectorXd init_state(const LdsModel& model, const Eigen::VectorXd& patch) {
  if (patch.size() != model.mu.size()) {
    throw Error("init_state: patch length " + std::to_string(patch.size()) + ", expected " +
                std::to_string(model.mu.size()));
  }
  // C^+ (patch - mu); equals C^T (patch - mu) for orthonormal C, zero for C = 0.
  if (model.order() == 0) return Eigen::VectorXd::Zero(0);
  return pseudo_inverse(model.C) * (patch - model.mu);
}

Eigen::VectorXd predict_template(const LdsModel& model, const Eigen::VectorXd& x) {
  if (x.size() != model.order()) {
    throw Error("predict_template: state has dimension " + std::to_string(x.size()) +
                ", model order is " + std::to_string(model.order()));
  }
  return model.mu + model.C * x;
}

LdsModel transform_model(const LdsModel& model, const TemplateGeometry& target,
                         bool reflect_horizontal) {
  validate(model);
  validate(target);
  const auto resample = [&](const Eigen::VectorXd& image) {
    return stack(resample_bilinear(unstack(image, model.geometry), target.rows, target.cols,
                                   reflect_horizontal));
  };

  LdsModel out = model;
  out.geometry = target;
  out.mu = resample(model.mu);
  const Eigen::Index n = model.order();
  Eigen::MatrixXd C(target.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) C.col(i) = resample(model.C.col(i));
  if (n == 0) {
    out.C = C;
    return out;
  }
  if (target.size() < n) throw Error("transform_model: target window smaller than model order");

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(C);
  Eigen::MatrixXd Qc = qr.householderQ() * Eigen::MatrixXd::Identity(target.size(), n);
  Eigen::MatrixXd Rc = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (Rc(i, i) < 0) {
      Rc.row(i) *= -1.0;
      Qc.col(i) *= -1.0;
    }
  }
  const double scale = Rc.diagonal().cwiseAbs().maxCoeff();
  if (Rc.diagonal().cwiseAbs().minCoeff() <= 1e-12 * std::max(scale, 1e-300)) {
    throw Error("transform_model: resampled observation matrix is rank deficient");
  }
  const Eigen::MatrixXd Rinv =
      Rc.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));
  out.C = Qc;
  out.A = Rc * model.A * Rinv;
  out.Q = Rc * model.Q * Rc.transpose();
  out.Q = (0.5 * (out.Q + out.Q.transpose())).eval();
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& Q) {
  if (Q.size() == 0) return Q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (Q + Q.transpose()));
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& M, double rel_tol) {
  if (M.size() == 0) return Eigen::MatrixXd::Zero(M.cols(), M.rows());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double cutoff = rel_tol * sv(0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff && sv(i) > 0) inv(i) = 1.0 / sv(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& Q, std::string* diagnostic) {
  const Eigen::Index n = Q.rows();
  if (n == 0) return Q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (Q + Q.transpose()));
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double floor = 1e-8 * std::max(Q.trace(), 0.0) / static_cast<double>(n);
  if (floor <= 0.0) {
    if (diagnostic) *diagnostic = "state noise covariance has zero trace; using pseudo-inverse 0";
    return Eigen::MatrixXd::Zero(n, n);
  }
  if (lambda.minCoeff() < floor && diagnostic) {
    *diagnostic = "state noise covariance is near-singular; eigenvalues floored at " +
                  std::to_string(floor);
  }
  const Eigen::VectorXd inv = lambda.cwiseMax(floor).cwiseInverse();
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(A, false);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd discrete_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& W) {
  const Eigen::Index n = A.rows();
  if (n == 0) return W;
  if (spectral_radius(A) >= 1.0) throw Error("discrete_lyapunov requires a stable A");
  const Eigen::MatrixXd K = Eigen::MatrixXd::Identity(n * n, n * n) -
                            Eigen::kroneckerProduct(A, A).eval();
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(W.data(), n * n);
  const Eigen::VectorXd s = K.partialPivLu().solve(w);
  Eigen::MatrixXd S = Eigen::Map<const Eigen::MatrixXd>(s.data(), n, n);
  return 0.5 * (S + S.transpose());
}

}  // namespace dyntrack

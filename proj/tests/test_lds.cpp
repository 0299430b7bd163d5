#include "dyntrack/lds.hpp"
#include "dyntrack/recognition.hpp"
#include "dyntrack/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace dyntrack;

namespace {

// Principal-angle sines between two column spans.
double max_angle_sine(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd qa = a.householderQr().householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  const Eigen::MatrixXd qb = b.householderQr().householderQ() * Eigen::MatrixXd::Identity(b.rows(), b.cols());
  const Eigen::MatrixXd residual = qb - qa * (qa.transpose() * qb);
  return Eigen::JacobiSVD<Eigen::MatrixXd>(residual).singularValues()(0);
}

}  // namespace

TEST_CASE("simulate with zero noise and zero state returns the mean") {
  LdsModel m = random_model(3, {6, 5}, 0.9, 4);
  m.Q.setZero();
  SimulationOptions opt;
  opt.initial_state = Eigen::VectorXd::Zero(3);
  const Simulation sim = simulate(m, 5, 1, opt);
  REQUIRE(sim.templates.size() == 5);
  for (const Frame& f : sim.templates) CHECK((stack(f) - m.mu).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("simulate is deterministic in the seed") {
  const LdsModel m = random_model(5, {8, 8}, 0.9, 5);
  const Simulation a = simulate(m, 20, 42);
  const Simulation b = simulate(m, 20, 42);
  const Simulation c = simulate(m, 20, 43);
  for (int t = 0; t < 20; ++t) CHECK(a.templates[t] == b.templates[t]);
  CHECK(a.templates[3] != c.templates[3]);
}

TEST_CASE("one-step residuals have the model covariance") {
  const LdsModel m = random_model(5, {10, 10}, 0.9, 6);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(5, 5);
  int count = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Simulation sim = simulate(m, 100, seed);
    for (int t = 0; t + 1 < 100; ++t) {
      const Eigen::VectorXd v = sim.states[t + 1] - m.A * sim.states[t];
      S += v * v.transpose();
      ++count;
    }
  }
  S /= count;
  CHECK((S - m.Q).norm() / m.Q.norm() < 0.25);
}

TEST_CASE("simulate rejects bad arguments") {
  LdsModel m = random_model(2, {4, 4}, 0.5, 1);
  CHECK_THROWS_AS(simulate(m, 0, 1), Error);
  m.Q(0, 0) = -1.0;
  CHECK_THROWS_AS(simulate(m, 3, 1), Error);
}

TEST_CASE("identify recovers a noiselessly generated system") {
  const LdsModel gen = random_model(5, {12, 12}, 0.9, 7);
  SimulationOptions opt;
  opt.process_noise = false;
  opt.initial_state = Eigen::VectorXd::Ones(5);
  const Simulation sim = simulate(gen, 80, 3, opt);
  const Identification id = identify(sim.templates, 5);
  CHECK(id.model.order() == 5);
  CHECK((id.model.C.transpose() * id.model.C - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-10);
  CHECK(martin_distance(id.model, gen) < 1e-6);

  Eigen::MatrixXd Y(144, 80), X(5, 80);
  for (int t = 0; t < 80; ++t) {
    Y.col(t) = stack(sim.templates[t]) - id.model.mu;
    X.col(t) = id.states[t];
  }
  CHECK((Y - id.model.C * X).norm() / Y.norm() < 1e-10);
}

TEST_CASE("identify reduces the order of a constant sequence") {
  Frame f = testutil::smooth_frame(5, 6);
  const Identification id = identify(FrameSequence(8, f), 3);
  CHECK(id.model.order() == 0);
  CHECK(id.requested_order == 3);
  CHECK_FALSE(id.diagnostics.empty());
  CHECK((id.model.mu - stack(f)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("identify needs more patches than the order") {
  const Frame f = testutil::smooth_frame(5, 6);
  CHECK_THROWS_AS(identify(FrameSequence(3, f), 3), Error);
  FrameSequence mixed{f, f, testutil::smooth_frame(6, 6), f};
  CHECK_THROWS_AS(identify(mixed, 1), Error);
}

TEST_CASE("init_state inverts the observation map") {
  const LdsModel m = random_model(4, {9, 7}, 0.8, 8);
  CHECK(init_state(m, m.mu).norm() < 1e-14);
  const Eigen::VectorXd x = testutil::random_matrix(4, 1, 9);
  CHECK((init_state(m, predict_template(m, x)) - x).norm() < 1e-12);

  const Eigen::VectorXd w = 1e-3 * testutil::random_matrix(63, 1, 10);
  CHECK((init_state(m, predict_template(m, x) + w) - x).norm() <= w.norm());

  // Dense least-squares oracle.
  const Eigen::VectorXd y = testutil::random_matrix(63, 1, 11);
  const Eigen::VectorXd ls = m.C.colPivHouseholderQr().solve(y - m.mu);
  CHECK((init_state(m, y) - ls).norm() < 1e-10);
  CHECK_THROWS_AS(init_state(m, Eigen::VectorXd::Zero(5)), Error);
}

TEST_CASE("predict_template") {
  const LdsModel m = random_model(3, {5, 5}, 0.8, 12);
  CHECK(predict_template(m, Eigen::VectorXd::Zero(3)) == m.mu);
  CHECK(predict_template(m, Eigen::VectorXd::Unit(3, 0)).isApprox(m.mu + m.C.col(0)));
  CHECK_THROWS_AS(predict_template(m, Eigen::VectorXd::Zero(2)), Error);
}

TEST_CASE("transform_model keeps the span at identity geometry") {
  const LdsModel m = random_model(5, {11, 13}, 0.9, 13);
  const LdsModel t = transform_model(m, m.geometry, false);
  CHECK((t.mu - m.mu).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(max_angle_sine(t.C, m.C) < 1e-8);
  CHECK(martin_distance(t, m) < 1e-8);
  CHECK((t.C.transpose() * t.C - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-10);
}

TEST_CASE("transform_model reproduces the resampled template process") {
  const LdsModel m = random_model(3, {8, 10}, 0.9, 14);
  const TemplateGeometry target{12, 9};
  const LdsModel t = transform_model(m, target, true);
  CHECK(t.geometry == target);
  const Eigen::VectorXd x = testutil::random_matrix(3, 1, 15);
  const Eigen::MatrixXd Rc = t.C.transpose() *
                             [&] {
                               Eigen::MatrixXd r(target.size(), 3);
                               for (int i = 0; i < 3; ++i)
                                 r.col(i) = stack(resample_bilinear(unstack(m.C.col(i), m.geometry),
                                                                    12, 9, true));
                               return r;
                             }();
  const Frame expected = resample_bilinear(unstack(predict_template(m, x), m.geometry), 12, 9, true);
  CHECK((predict_template(t, Rc * x) - stack(expected)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("reflecting twice restores the mean") {
  const LdsModel m = random_model(4, {9, 12}, 0.9, 16);
  const LdsModel back = transform_model(transform_model(m, m.geometry, true), m.geometry, true);
  CHECK((back.mu - m.mu).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(max_angle_sine(back.C, m.C) < 1e-8);
}

TEST_CASE("scaling up and back keeps a smooth mean") {
  const LdsModel m = random_model(3, {15, 15}, 0.9, 17);
  const LdsModel up = transform_model(m, {30, 30}, false);
  const LdsModel back = transform_model(up, {15, 15}, false);
  CHECK((back.mu - m.mu).cwiseAbs().maxCoeff() < 0.05);
  CHECK_THROWS_AS(transform_model(m, {0, 5}, false), Error);
}

TEST_CASE("linear-algebra helpers") {
  const Eigen::MatrixXd G = testutil::random_matrix(4, 4, 18);
  const Eigen::MatrixXd Q = G * G.transpose();
  const Eigen::MatrixXd B = psd_sqrt(Q);
  CHECK((B * B.transpose() - Q).norm() < 1e-10);

  const Eigen::MatrixXd M = testutil::random_matrix(5, 3, 19);
  const Eigen::MatrixXd P = pseudo_inverse(M);
  CHECK((P * M - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-10);

  std::string diag;
  CHECK((regularized_inverse(Q, &diag) * Q - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-8);
  CHECK(diag.empty());
  Eigen::MatrixXd singular = Eigen::MatrixXd::Zero(3, 3);
  singular(0, 0) = 1.0;
  const Eigen::MatrixXd inv = regularized_inverse(singular, &diag);
  CHECK(inv.allFinite());
  CHECK_FALSE(diag.empty());

  Eigen::MatrixXd A(2, 2);
  A << 0.5, 0.2, 0.0, -0.3;
  CHECK(spectral_radius(A) == doctest::Approx(0.5));
  const Eigen::MatrixXd W = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd S = discrete_lyapunov(A, W);
  CHECK((A * S * A.transpose() + W - S).norm() < 1e-12);
  CHECK_THROWS_AS(discrete_lyapunov(2.0 * Eigen::MatrixXd::Identity(2, 2), W), Error);
}

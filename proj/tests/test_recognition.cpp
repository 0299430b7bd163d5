#include "dyntrack/recognition.hpp"
#include "dyntrack/synth.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace dyntrack;

namespace {

LdsModel similar(const LdsModel& m, const Eigen::MatrixXd& P) {
  LdsModel s = m;
  const Eigen::MatrixXd Pi = P.inverse();
  s.A = P * m.A * Pi;
  s.C = m.C * Pi;
  s.Q = P * m.Q * P.transpose();
  return s;
}

}  // namespace

TEST_CASE("martin distance is zero on identical and similar systems") {
  const LdsModel m = random_model(5, {10, 10}, 0.9, 51);
  CHECK(martin_distance(m, m) == 0.0);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Eigen::MatrixXd P = testutil::random_matrix(5, 5, 600 + seed);
    P += 3.0 * Eigen::MatrixXd::Identity(5, 5);
    CHECK(martin_distance(m, similar(m, P)) < 1e-8);
  }
}

TEST_CASE("martin distance is symmetric and positive between distinct systems") {
  const LdsModel a = random_model(5, {10, 10}, 0.9, 52);
  const LdsModel b = random_model(4, {10, 10}, 0.8, 53);
  const double ab = martin_distance(a, b);
  CHECK(ab > 0.0);
  CHECK(std::abs(ab - martin_distance(b, a)) < 1e-8);
  const MartinResult r = martin_analysis(a, b);
  CHECK(r.horizon == 50);
  CHECK(r.cosines.size() == 4);
  double sum = 0;
  for (Eigen::Index i = 0; i < r.cosines.size(); ++i) sum -= std::log(r.cosines(i) * r.cosines(i));
  CHECK(r.distance == doctest::Approx(sum));
}

TEST_CASE("orthogonal observability spans reach the capped distance") {
  LdsModel a, b;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(16, 16);
  for (LdsModel* m : {&a, &b}) {
    m->geometry = {4, 4};
    m->mu = Eigen::VectorXd::Constant(16, 0.5);
    m->A = Eigen::MatrixXd::Zero(3, 3);
    m->Q = Eigen::MatrixXd::Identity(3, 3);
  }
  a.C = I.leftCols(3);
  b.C = I.middleCols(3, 3);
  const MartinResult r = martin_analysis(a, b);
  CHECK(r.cosines.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.distance == doctest::Approx(3 * std::log(1e12)));
}

TEST_CASE("rank-deficient observability is reported") {
  LdsModel a = random_model(3, {5, 5}, 0.8, 54);
  LdsModel b = a;
  b.C.col(2) = b.C.col(1);
  b.A = Eigen::MatrixXd::Identity(3, 3);
  const MartinResult r = martin_analysis(a, b);
  CHECK(r.rank2 < 3);
  CHECK_FALSE(r.diagnostics.empty());
  CHECK(std::isfinite(r.distance));
}

TEST_CASE("nearest-neighbour classification") {
  CHECK(nn_classify({3, 1, 2}, {"a", "b", "a"}) == "b");
  CHECK(nn_classify({1, 1}, {"x", "y"}) == "x");
  CHECK(nn_classify({7}, {"only"}) == "only");
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(nn_classify({inf, 2}, {"x", "y"}) == "y");
  CHECK_THROWS_AS(nn_classify({inf, inf}, {"x", "y"}), Error);
  CHECK(argmin_cost({2, 0.5, 0.5}) == 1);
}

TEST_CASE("strategy names round-trip") {
  for (const Strategy s :
       {Strategy::kReconstruction, Strategy::kTrackThenClassify, Strategy::kClassifierCost})
    CHECK(parse_strategy(to_string(s)) == s);
  CHECK(to_string(Strategy::kClassifierCost) == "tr-c");
  CHECK_THROWS_AS(parse_strategy("knn"), Error);
}

TEST_CASE("the generating model wins on its own sequence") {
  const LdsModel g0 = random_model(5, {21, 21}, 0.9, 501);
  const LdsModel g1 = random_model(5, {21, 21}, 0.9, 502);
  ScenarioSpec spec;
  spec.frames = 15;
  spec.sigma_Y = 0.0;
  spec.seed = 9;
  const Scenario sc = composite_sequence(spec, g1);

  TrainingSet ts;
  ts.models.push_back({g0, "a", "m0"});
  ts.models.push_back({g1, "b", "m1"});
  RecognitionConfig cfg;
  cfg.try_reflection = false;
  const auto cands = track_candidates(sc.frames, sc.truth.centers[0], ts, cfg);
  REQUIRE(cands.size() == 2);

  const RecognitionResult rr = score_reconstruction(cands, ts);
  CHECK(rr.label == "b");
  CHECK(rr.costs[1] < rr.costs[0]);
  const RecognitionResult rc = score_classifier_cost(sc.frames, cands, ts, cfg);
  CHECK(rc.label == "b");
  CHECK(rc.costs[1] < rc.costs[0]);
  // Both strategies rank the very same tracks.
  CHECK(rr.candidates[1].track.locations() == rc.candidates[1].track.locations());

  const RecognitionResult tr = score_track_then_classify(sc.frames, cands, ts, cfg);
  CHECK(tr.label == "b");

  const auto again = recognize(Strategy::kClassifierCost, sc.frames, sc.truth.centers[0], ts, cfg);
  CHECK(again.costs == rc.costs);
  CHECK(again.tracks.locations() == rc.tracks.locations());
}

TEST_CASE("identification along a noiseless track recovers the generator") {
  const LdsModel g = random_model(5, {21, 21}, 0.9, 503);
  SimulationOptions opt;
  opt.process_noise = false;
  opt.initial_state = Eigen::VectorXd::Constant(5, 0.5);
  const Simulation sim = simulate(g, 40, 1, opt);
  const Frame background = smooth_image(61, 61, 4, 0.0, 0.4);
  FrameSequence frames;
  for (const Frame& patch : sim.templates) {
    Frame f = background;
    f.block(20, 20, 21, 21) = patch;
    frames.push_back(f);
  }
  const Eigen::Vector2d center(30, 30);
  const TrackResult tr = track_sequence(frames, g, center, TrackerConfig{});
  for (const auto& st : tr.frames) CHECK((st.location - center).norm() < 1e-6);
  const Identification id = identify_along_track(frames, tr, g.geometry, 5);
  CHECK(martin_distance(id.model, g) < 1e-3);
}

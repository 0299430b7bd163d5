#include "dyntrack/recognition.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dyntrack {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd observability(const LdsModel& m, int horizon) {
  const Eigen::Index N = m.C.rows();
  const Eigen::Index n = m.order();
  Eigen::MatrixXd O(N * horizon, n);
  Eigen::MatrixXd block = m.C;
  for (int k = 0; k < horizon; ++k) {
    O.middleRows(k * N, N) = block;
    if (k + 1 < horizon) block = block * m.A;
  }
  return O;
}

// Orthonormal basis of the numerical column span.
Eigen::MatrixXd span_basis(const Eigen::MatrixXd& O) {
  if (O.cols() == 0) return Eigen::MatrixXd(O.rows(), 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(O, Eigen::ComputeThinU);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < sv.size() && sv(0) > 0 && sv(rank) > 1e-10 * sv(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

TemplateGeometry window_for(const RecognitionConfig& config, const LdsModel& model) {
  return config.window ? *config.window : model.geometry;
}

LdsModel fit_to_window(const LdsModel& model, const TemplateGeometry& window, bool reflect) {
  if (!reflect && model.geometry == window) return model;
  return transform_model(model, window, reflect);
}

int identification_order(const RecognitionConfig& config, const LdsModel& model) {
  return config.order > 0 ? config.order : model.order();
}

void finish(RecognitionResult& r, const TrainingSet& training) {
  r.winner = argmin_cost(r.costs);
  r.label = training.models[r.winner].label;
  if (r.strategy != Strategy::kTrackThenClassify) r.tracks = r.candidates[r.winner].track;
}

void check_training(const TrainingSet& training) {
  if (training.models.empty()) throw Error("training set is empty");
}

}  // namespace

MartinResult martin_analysis(const LdsModel& m1, const LdsModel& m2) {
  if (m1.C.rows() != m2.C.rows()) {
    throw Error("martin_distance: observation dimensions differ (" + std::to_string(m1.C.rows()) +
                " vs " + std::to_string(m2.C.rows()) + ")");
  }
  if (m1.A.rows() != m1.A.cols() || m2.A.rows() != m2.A.cols() || m1.C.cols() != m1.A.rows() ||
      m2.C.cols() != m2.A.rows()) {
    throw Error("martin_distance: inconsistent (A, C) dimensions");
  }
  MartinResult r;
  const int n1 = m1.order();
  const int n2 = m2.order();
  r.horizon = std::min(10 * std::max(n1, n2), 50);
  if (r.horizon == 0) return r;

  if (m1.A == m2.A && m1.C == m2.C) {
    r.rank1 = r.rank2 = n1;
    r.cosines = Eigen::VectorXd::Ones(n1);
    return r;
  }

  const Eigen::MatrixXd U1 = span_basis(observability(m1, r.horizon));
  const Eigen::MatrixXd U2 = span_basis(observability(m2, r.horizon));
  r.rank1 = static_cast<int>(U1.cols());
  r.rank2 = static_cast<int>(U2.cols());
  const int angles = std::min(r.rank1, r.rank2);
  if (angles < std::min(n1, n2)) {
    r.diagnostics.push_back("observability rank deficient (ranks " + std::to_string(r.rank1) +
                            ", " + std::to_string(r.rank2) + "); angles restricted to " +
                            std::to_string(angles));
  }
  if (angles == 0) {
    r.distance = std::min(n1, n2) * -std::log(kMartinCosineFloor);
    return r;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(U1.transpose() * U2);
  r.cosines = svd.singularValues().head(angles).cwiseMin(1.0);
  for (Eigen::Index i = 0; i < r.cosines.size(); ++i) {
    r.distance -= std::log(std::max(r.cosines(i) * r.cosines(i), kMartinCosineFloor));
  }
  r.distance = std::max(r.distance, 0.0);
  return r;
}

double martin_distance(const LdsModel& m1, const LdsModel& m2) {
  return martin_analysis(m1, m2).distance;
}

std::vector<std::string> TrainingSet::labels() const {
  std::vector<std::string> out;
  for (const auto& m : models) {
    if (std::find(out.begin(), out.end(), m.label) == out.end()) out.push_back(m.label);
  }
  return out;
}

Strategy parse_strategy(const std::string& name) {
  if (name == "tr-r") return Strategy::kReconstruction;
  if (name == "t+r") return Strategy::kTrackThenClassify;
  if (name == "tr-c") return Strategy::kClassifierCost;
  throw Error("unknown strategy '" + name + "' (expected tr-r, t+r or tr-c)");
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::kReconstruction: return "tr-r";
    case Strategy::kTrackThenClassify: return "t+r";
    case Strategy::kClassifierCost: return "tr-c";
  }
  return "unknown";
}

std::size_t argmin_cost(const std::vector<double>& costs) {
  std::size_t best = costs.size();
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!std::isfinite(costs[i])) continue;
    if (best == costs.size() || costs[i] < costs[best]) best = i;
  }
  if (best == costs.size()) throw Error("no candidate has a finite cost");
  return best;
}

std::string nn_classify(const std::vector<double>& costs, const std::vector<std::string>& labels) {
  if (costs.size() != labels.size()) throw Error("nn_classify: costs and labels differ in length");
  return labels[argmin_cost(costs)];
}

std::vector<CandidateTrack> track_candidates(const FrameSequence& frames,
                                             const Eigen::Vector2d& initial_location,
                                             const TrainingSet& training,
                                             const RecognitionConfig& config) {
  check_training(training);
  std::vector<CandidateTrack> out;
  out.reserve(training.models.size());
  for (const TrainingModel& tm : training.models) {
    const TemplateGeometry window = window_for(config, tm.model);
    CandidateTrack best;
    for (bool reflect : {false, true}) {
      if (reflect && !config.try_reflection) break;
      CandidateTrack c;
      c.reflected = reflect;
      c.model = fit_to_window(tm.model, window, reflect);
      c.track = track_sequence(frames, c.model, initial_location, config.tracker);
      c.track.model_id = tm.id;
      c.reconstruction_cost = c.track.any_clamped() ? kInf : c.track.mean_objective;
      if (!reflect || c.reconstruction_cost < best.reconstruction_cost) best = std::move(c);
    }
    out.push_back(std::move(best));
  }
  return out;
}

Identification identify_along_track(const FrameSequence& frames, const TrackResult& track,
                                    const TemplateGeometry& geometry, int order) {
  if (track.frames.size() != frames.size()) throw Error("track and sequence lengths differ");
  std::vector<Eigen::VectorXd> patches;
  patches.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    patches.push_back(extract_patch(frames[t], track.frames[t].location, geometry));
  }
  return identify(patches, geometry, order);
}

RecognitionResult score_reconstruction(std::vector<CandidateTrack> candidates,
                                       const TrainingSet& training) {
  check_training(training);
  if (candidates.size() != training.models.size()) throw Error("one candidate per model expected");
  RecognitionResult r;
  r.strategy = Strategy::kReconstruction;
  for (const auto& c : candidates) r.costs.push_back(c.reconstruction_cost);
  r.candidates = std::move(candidates);
  finish(r, training);
  return r;
}

RecognitionResult score_track_then_classify(const FrameSequence& frames,
                                            std::vector<CandidateTrack> candidates,
                                            const TrainingSet& training,
                                            const RecognitionConfig& config) {
  RecognitionResult base = score_reconstruction(std::move(candidates), training);
  RecognitionResult r;
  r.strategy = Strategy::kTrackThenClassify;
  r.tracks = base.tracks;
  r.candidates = std::move(base.candidates);

  const LdsModel& tracked = r.candidates[base.winner].model;
  const TemplateGeometry window = tracked.geometry;
  const Identification id =
      identify_along_track(frames, r.tracks, window, identification_order(config, tracked));
  r.diagnostics = id.diagnostics;
  if (id.model.order() == 0) throw Error("identification along the tracks produced an empty model");

  for (const TrainingModel& tm : training.models) {
    double cost = martin_distance(id.model, fit_to_window(tm.model, window, false));
    if (config.try_reflection) {
      cost = std::min(cost, martin_distance(id.model, fit_to_window(tm.model, window, true)));
    }
    r.costs.push_back(cost);
  }
  finish(r, training);
  return r;
}

RecognitionResult score_classifier_cost(const FrameSequence& frames,
                                        std::vector<CandidateTrack> candidates,
                                        const TrainingSet& training,
                                        const RecognitionConfig& config) {
  check_training(training);
  if (candidates.size() != training.models.size()) throw Error("one candidate per model expected");
  RecognitionResult r;
  r.strategy = Strategy::kClassifierCost;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const CandidateTrack& c = candidates[i];
    if (!std::isfinite(c.reconstruction_cost)) {
      r.costs.push_back(kInf);
      continue;
    }
    try {
      const Identification id = identify_along_track(frames, c.track, c.model.geometry,
                                                     identification_order(config, c.model));
      r.costs.push_back(martin_distance(id.model, c.model));
    } catch (const Error& e) {
      r.costs.push_back(kInf);
      r.diagnostics.push_back("model " + training.models[i].id + ": " + e.what());
    }
  }
  r.candidates = std::move(candidates);
  finish(r, training);
  return r;
}

RecognitionResult recognize_reconstruction(const FrameSequence& frames,
                                           const Eigen::Vector2d& initial_location,
                                           const TrainingSet& training,
                                           const RecognitionConfig& config) {
  return score_reconstruction(track_candidates(frames, initial_location, training, config),
                              training);
}

RecognitionResult recognize_track_then_classify(const FrameSequence& frames,
                                                const Eigen::Vector2d& initial_location,
                                                const TrainingSet& training,
                                                const RecognitionConfig& config) {
  return score_track_then_classify(
      frames, track_candidates(frames, initial_location, training, config), training, config);
}

RecognitionResult recognize_classifier_cost(const FrameSequence& frames,
                                            const Eigen::Vector2d& initial_location,
                                            const TrainingSet& training,
                                            const RecognitionConfig& config) {
  return score_classifier_cost(
      frames, track_candidates(frames, initial_location, training, config), training, config);
}

RecognitionResult recognize(Strategy strategy, const FrameSequence& frames,
                            const Eigen::Vector2d& initial_location, const TrainingSet& training,
                            const RecognitionConfig& config) {
  switch (strategy) {
    case Strategy::kReconstruction:
      return recognize_reconstruction(frames, initial_location, training, config);
    case Strategy::kTrackThenClassify:
      return recognize_track_then_classify(frames, initial_location, training, config);
    case Strategy::kClassifierCost:
      return recognize_classifier_cost(frames, initial_location, training, config);
  }
  throw Error("unknown strategy");
}

}  // namespace dyntrack

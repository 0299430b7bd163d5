#pragma once

#include "dyntrack/lds.hpp"
#include "dyntrack/tracker.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace dyntrack {

struct MartinResult {
  double distance = 0.0;
  Eigen::VectorXd cosines;  ///< cos of the principal angles, descending
  int rank1 = 0;
  int rank2 = 0;
  int horizon = 0;
  std::vector<std::string> diagnostics;
};

/// Smallest cos^2 admitted before the logarithm.
inline constexpr double kMartinCosineFloor = 1e-12;

/// Principal angles between the finite-horizon observability spans
/// [C; CA; ...; CA^{m-1}], m = min(10 max(n1, n2), 50); d = -sum ln cos^2.
MartinResult martin_analysis(const LdsModel& m1, const LdsModel& m2);
double martin_distance(const LdsModel& m1, const LdsModel& m2);

struct TrainingModel {
  LdsModel model;
  std::string label;
  std::string id;
};

struct TrainingSet {
  std::vector<TrainingModel> models;

  /// Distinct labels in order of first appearance.
  std::vector<std::string> labels() const;
};

enum class Strategy {
  kReconstruction,      ///< tr-r
  kTrackThenClassify,   ///< t+r
  kClassifierCost,      ///< tr-c
};

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy strategy);

struct RecognitionConfig {
  TrackerConfig tracker;
  /// Window size of the test sequence; unset tracks each model at its own geometry.
  std::optional<TemplateGeometry> window;
  /// Also track with the horizontally reflected model and keep the cheaper run.
  bool try_reflection = true;
  /// Order identified from the tracks; 0 uses the tracking model's order.
  int order = 0;
};

/// One training model's tracking run on the test sequence.
struct CandidateTrack {
  TrackResult track;
  LdsModel model;  ///< model as tracked (transformed, possibly reflected)
  bool reflected = false;
  double reconstruction_cost = 0.0;  ///< mean objective, +inf if any frame was clamped
};

struct RecognitionResult {
  Strategy strategy = Strategy::kReconstruction;
  std::vector<double> costs;
  std::size_t winner = 0;
  std::string label;
  TrackResult tracks;
  std::vector<CandidateTrack> candidates;
  std::vector<std::string> diagnostics;
};

/// Index of the smallest finite cost, ties to the lowest index.
std::size_t argmin_cost(const std::vector<double>& costs);
std::string nn_classify(const std::vector<double>& costs, const std::vector<std::string>& labels);

/// Tracks the sequence once per training model.
std::vector<CandidateTrack> track_candidates(const FrameSequence& frames,
                                             const Eigen::Vector2d& initial_location,
                                             const TrainingSet& training,
                                             const RecognitionConfig& config);

/// Patches along a track, identified at the given order.
Identification identify_along_track(const FrameSequence& frames, const TrackResult& track,
                                    const TemplateGeometry& geometry, int order);

RecognitionResult recognize_reconstruction(const FrameSequence& frames,
                                           const Eigen::Vector2d& initial_location,
                                           const TrainingSet& training,
                                           const RecognitionConfig& config);
RecognitionResult recognize_track_then_classify(const FrameSequence& frames,
                                                const Eigen::Vector2d& initial_location,
                                                const TrainingSet& training,
                                                const RecognitionConfig& config);
RecognitionResult recognize_classifier_cost(const FrameSequence& frames,
                                            const Eigen::Vector2d& initial_location,
                                            const TrainingSet& training,
                                            const RecognitionConfig& config);

/// The three strategies scored from already tracked candidates.
RecognitionResult score_reconstruction(std::vector<CandidateTrack> candidates,
                                       const TrainingSet& training);
RecognitionResult score_track_then_classify(const FrameSequence& frames,
                                            std::vector<CandidateTrack> candidates,
                                            const TrainingSet& training,
                                            const RecognitionConfig& config);
RecognitionResult score_classifier_cost(const FrameSequence& frames,
                                        std::vector<CandidateTrack> candidates,
                                        const TrainingSet& training,
                                        const RecognitionConfig& config);

RecognitionResult recognize(Strategy strategy, const FrameSequence& frames,
                            const Eigen::Vector2d& initial_location, const TrainingSet& training,
                            const RecognitionConfig& config);

}  // namespace dyntrack

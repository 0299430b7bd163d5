#pragma once

#include "dyntrack/baselines.hpp"
#include "dyntrack/lds.hpp"
#include "dyntrack/recognition.hpp"
#include "dyntrack/synth.hpp"
#include "dyntrack/tracker.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dyntrack {

/// Malformed input: carries the file and the byte offset of the problem.
class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::uint64_t offset, const std::string& what);
  const std::string& file() const { return file_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::string file_;
  std::uint64_t offset_;
};

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

// PGM P5, maxval <= 65535. Intensities map to [0, 1].
Frame parse_pgm(const std::string& bytes, const std::string& source);
std::string encode_pgm(const Frame& frame);
Frame read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Frame& frame);

std::string frame_filename(std::size_t index);
/// frame_00000.pgm, frame_00001.pgm, ... until the first missing index.
FrameSequence read_sequence(const std::filesystem::path& dir);
void write_sequence(const std::filesystem::path& dir, const FrameSequence& frames);

nlohmann::json parse_json(const std::string& text, const std::string& source);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

nlohmann::json to_json(const LdsModel& model);
LdsModel model_from_json(const nlohmann::json& doc, const std::string& source);
LdsModel read_model(const std::filesystem::path& path);
void write_model(const std::filesystem::path& path, const LdsModel& model);

nlohmann::json to_json(const ScenarioSpec& spec);
/// Missing keys keep their defaults; unknown keys are rejected.
ScenarioSpec scenario_from_json(const nlohmann::json& doc, const std::string& source);

nlohmann::json states_to_json(const StateSequence& states, const Eigen::VectorXd& initial_state);
StateSequence states_from_json(const nlohmann::json& doc, const std::string& source,
                               Eigen::VectorXd* initial_state = nullptr);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::uint64_t> row_offsets;  ///< byte offset of each row
  std::string source;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const;
  long long integer(std::size_t row, std::size_t col) const;
};

CsvTable parse_csv(const std::string& text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);

struct TrackRow {
  long long frame = 0;
  Eigen::Vector2d location = Eigen::Vector2d::Zero();
  double objective = 0.0;
  int iterations = 0;
  bool clamped = false;
};

std::string tracks_csv(const TrackResult& track);
std::vector<TrackRow> parse_tracks(const CsvTable& table);

std::string ground_truth_csv(const std::vector<Eigen::Vector2d>& centers);
std::vector<Eigen::Vector2d> parse_ground_truth(const CsvTable& table);

/// Rows t,err,std1,std2,std3,method,seed.
std::string errors_csv(const StateEstimate& estimate, const std::string& method,
                       std::uint64_t seed);

struct ReportRow {
  std::string test_id;
  std::string model_id;
  std::string label;
  double cost = 0.0;
  std::string strategy;
};

std::string report_csv(const std::vector<ReportRow>& rows);

/// Rows are true labels, columns predicted labels.
std::string confusion_csv(const std::vector<std::string>& labels,
                          const std::vector<std::vector<int>>& counts);

}  // namespace dyntrack

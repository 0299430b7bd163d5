#include "dyntrack/metrics.hpp"

#include "dyntrack/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dyntrack {

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

ErrorSummary summarize(const std::vector<double>& errors) {
  if (errors.empty()) throw Error("no errors to summarize");
  ErrorSummary s;
  s.median = median(errors);
  std::vector<double> dev;
  dev.reserve(errors.size());
  double sum = 0;
  for (double e : errors) {
    dev.push_back((e - s.median) * (e - s.median));
    sum += e;
  }
  s.rse = std::sqrt(median(dev));
  s.mean = sum / static_cast<double>(errors.size());
  double var = 0;
  for (double e : errors) var += (e - s.mean) * (e - s.mean);
  s.std = std::sqrt(var / static_cast<double>(errors.size()));
  return s;
}

MetricsReport compute_metrics(const std::vector<Eigen::Vector2d>& tracks,
                              const std::vector<Eigen::Vector2d>& ground_truth) {
  if (tracks.empty()) throw Error("compute_metrics: empty track");
  if (tracks.size() != ground_truth.size()) {
    throw Error("compute_metrics: " + std::to_string(tracks.size()) + " tracked frames but " +
                std::to_string(ground_truth.size()) + " ground-truth frames");
  }
  MetricsReport r;
  r.errors.reserve(tracks.size());
  for (std::size_t t = 0; t < tracks.size(); ++t) r.errors.push_back((tracks[t] - ground_truth[t]).norm());
  r.summary = summarize(r.errors);
  return r;
}

}  // namespace dyntrack

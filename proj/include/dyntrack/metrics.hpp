#pragma once

#include <Eigen/Dense>

#include <vector>

namespace dyntrack {

struct ErrorSummary {
  double median = 0.0;
  double rse = 0.0;  ///< sqrt(median{(e - median(e))^2})
  double mean = 0.0;
  double std = 0.0;  ///< population standard deviation
};

struct MetricsReport {
  std::vector<double> errors;  ///< |l_hat_t - l_t| per frame
  ErrorSummary summary;
};

/// Median of the values; the mean of the two middle values for even counts.
double median(std::vector<double> values);

ErrorSummary summarize(const std::vector<double>& errors);

MetricsReport compute_metrics(const std::vector<Eigen::Vector2d>& tracks,
                              const std::vector<Eigen::Vector2d>& ground_truth);

}  // namespace dyntrack

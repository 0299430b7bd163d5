#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dyntrack {

/// Raised for malformed inputs and violated preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Grayscale (or single-channel feature) image, rows x cols, intensities in [0, 1].
using Frame = Eigen::MatrixXd;
using FrameSequence = std::vector<Frame>;

/// Extent of a template window.
///
/// Pixels are stacked column-wise (index = col * rows + row), which is exactly
/// Eigen's default column-major storage of an r x c matrix. Locations are
/// (x, y) = (column, row) in pixel units; a window is addressed by its center.
struct TemplateGeometry {
  int rows = 0;
  int cols = 0;

  int size() const { return rows * cols; }
  int index(int row, int col) const { return col * rows + row; }

  /// Offset of pixel (row, col) from the window center, as (x, y).
  Eigen::Vector2d offset(int row, int col) const {
    return {col - 0.5 * (cols - 1), row - 0.5 * (rows - 1)};
  }

  bool operator==(const TemplateGeometry&) const = default;
};

void validate(const TemplateGeometry& geometry);

/// Column-wise stacking of a patch.
Eigen::VectorXd stack(const Frame& patch);
Frame unstack(const Eigen::VectorXd& patch, const TemplateGeometry& geometry);

double sample_bilinear(const Frame& frame, double x, double y);
/// Spatial derivative (d/dx, d/dy) of the bilinear interpolant.
Eigen::Vector2d sample_bilinear_gradient(const Frame& frame, double x, double y);

/// Box of window centers for which every pixel the window touches is in-frame.
struct LocationBounds {
  Eigen::Vector2d lower;
  Eigen::Vector2d upper;

  bool contains(const Eigen::Vector2d& loc) const {
    return (loc.array() >= lower.array()).all() && (loc.array() <= upper.array()).all();
  }
  Eigen::Vector2d clamp(const Eigen::Vector2d& loc) const {
    return loc.cwiseMax(lower).cwiseMin(upper);
  }
};

LocationBounds valid_locations(const TemplateGeometry& geometry, Eigen::Index frame_rows,
                               Eigen::Index frame_cols);

/// Patch of `geometry` centered at `center`, bilinearly sampled, stacked column-wise.
Eigen::VectorXd extract_patch(const Frame& frame, const Eigen::Vector2d& center,
                              const TemplateGeometry& geometry);

/// N x 2 Jacobian of extract_patch with respect to the center.
Eigen::MatrixXd patch_location_jacobian(const Frame& frame, const Eigen::Vector2d& center,
                                        const TemplateGeometry& geometry);

/// Bilinear resampling with pixel-center alignment, optionally mirrored left-right.
Frame resample_bilinear(const Frame& source, int rows, int cols, bool mirror = false);

}  // namespace dyntrack

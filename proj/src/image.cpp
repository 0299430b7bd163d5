#include "dyntrack/image.hpp"

#include <algorithm>
#include <cmath>

namespace dyntrack {

namespace {

constexpr double kEdgeSlack = 1e-9;

struct Cell {
  Eigen::Index i0, i1;
  double frac;
};

Cell locate(double coord, Eigen::Index extent, const char* axis) {
  if (!(coord >= -kEdgeSlack && coord <= static_cast<double>(extent - 1) + kEdgeSlack)) {
    throw Error(std::string("bilinear sample outside frame along ") + axis + ": " +
                std::to_string(coord));
  }
  if (extent == 1) return {0, 0, 0.0};
  auto i0 = static_cast<Eigen::Index>(std::floor(coord));
  i0 = std::clamp<Eigen::Index>(i0, 0, extent - 2);
  return {i0, i0 + 1, std::clamp(coord - static_cast<double>(i0), 0.0, 1.0)};
}

}  // namespace

void validate(const TemplateGeometry& geometry) {
  if (geometry.rows < 1 || geometry.cols < 1) {
    throw Error("template geometry must have positive extent, got " +
                std::to_string(geometry.rows) + "x" + std::to_string(geometry.cols));
  }
}

Eigen::VectorXd stack(const Frame& patch) {
  return Eigen::Map<const Eigen::VectorXd>(patch.data(), patch.size());
}

Frame unstack(const Eigen::VectorXd& patch, const TemplateGeometry& geometry) {
  if (patch.size() != geometry.size()) {
    throw Error("patch length " + std::to_string(patch.size()) + " does not match geometry " +
                std::to_string(geometry.rows) + "x" + std::to_string(geometry.cols));
  }
  return Eigen::Map<const Frame>(patch.data(), geometry.rows, geometry.cols);
}

double sample_bilinear(const Frame& frame, double x, double y) {
  const Cell cx = locate(x, frame.cols(), "x");
  const Cell cy = locate(y, frame.rows(), "y");
  const double top = (1 - cx.frac) * frame(cy.i0, cx.i0) + cx.frac * frame(cy.i0, cx.i1);
  const double bottom = (1 - cx.frac) * frame(cy.i1, cx.i0) + cx.frac * frame(cy.i1, cx.i1);
  return (1 - cy.frac) * top + cy.frac * bottom;
}

Eigen::Vector2d sample_bilinear_gradient(const Frame& frame, double x, double y) {
  const Cell cx = locate(x, frame.cols(), "x");
  const Cell cy = locate(y, frame.rows(), "y");
  const double a = frame(cy.i0, cx.i0), b = frame(cy.i0, cx.i1);
  const double c = frame(cy.i1, cx.i0), d = frame(cy.i1, cx.i1);
  const double dx = (cx.i1 == cx.i0) ? 0.0 : (1 - cy.frac) * (b - a) + cy.frac * (d - c);
  const double dy = (cy.i1 == cy.i0) ? 0.0 : (1 - cx.frac) * (c - a) + cx.frac * (d - b);
  return {dx, dy};
}

LocationBounds valid_locations(const TemplateGeometry& geometry, Eigen::Index frame_rows,
                               Eigen::Index frame_cols) {
  // A window centered at l touches integer pixels p with |p - l| < extent / 2 per axis.
  const Eigen::Vector2d half(0.5 * geometry.cols, 0.5 * geometry.rows);
  LocationBounds bounds;
  bounds.lower = half - Eigen::Vector2d::Constant(0.5);
  bounds.upper = Eigen::Vector2d(static_cast<double>(frame_cols), static_cast<double>(frame_rows)) -
                 half - Eigen::Vector2d::Constant(0.5);
  if ((bounds.upper.array() < bounds.lower.array()).any()) {
    throw Error("frame " + std::to_string(frame_rows) + "x" + std::to_string(frame_cols) +
                " is smaller than the template window");
  }
  return bounds;
}

Eigen::VectorXd extract_patch(const Frame& frame, const Eigen::Vector2d& center,
                              const TemplateGeometry& geometry) {
  Eigen::VectorXd patch(geometry.size());
  for (int col = 0; col < geometry.cols; ++col) {
    for (int row = 0; row < geometry.rows; ++row) {
      const Eigen::Vector2d p = center + geometry.offset(row, col);
      patch(geometry.index(row, col)) = sample_bilinear(frame, p.x(), p.y());
    }
  }
  return patch;
}

Eigen::MatrixXd patch_location_jacobian(const Frame& frame, const Eigen::Vector2d& center,
                                        const TemplateGeometry& geometry) {
  Eigen::MatrixXd jac(geometry.size(), 2);
  for (int col = 0; col < geometry.cols; ++col) {
    for (int row = 0; row < geometry.rows; ++row) {
      const Eigen::Vector2d p = center + geometry.offset(row, col);
      jac.row(geometry.index(row, col)) = sample_bilinear_gradient(frame, p.x(), p.y()).transpose();
    }
  }
  return jac;
}

Frame resample_bilinear(const Frame& source, int rows, int cols, bool mirror) {
  if (rows < 1 || cols < 1) throw Error("resample target must have positive extent");
  const double sy = static_cast<double>(source.rows()) / rows;
  const double sx = static_cast<double>(source.cols()) / cols;
  const double max_y = static_cast<double>(source.rows() - 1);
  const double max_x = static_cast<double>(source.cols() - 1);
  Frame out(rows, cols);
  for (int c = 0; c < cols; ++c) {
    const int src_c = mirror ? cols - 1 - c : c;
    const double x = std::clamp((src_c + 0.5) * sx - 0.5, 0.0, max_x);
    for (int r = 0; r < rows; ++r) {
      const double y = std::clamp((r + 0.5) * sy - 0.5, 0.0, max_y);
      out(r, c) = sample_bilinear(source, x, y);
    }
  }
  return out;
}

}  // namespace dyntrack

#pragma once

// Thin-plate-spline interpolation of scattered displacement vectors onto a
// fixed grid: phi(r) = r^2 log r with an affine term and the usual
// orthogonality side conditions, solved densely with partial pivoting.

#include <array>
#include <vector>

#include "fingervision/core.hpp"

namespace fv {

double tps_kernel(double r2);

struct RbfModel {
  std::vector<Point2> centers;
  /// RBF weights per center for dx and dy.
  std::vector<double> weights_x;
  std::vector<double> weights_y;
  /// Affine coefficients (constant, x, y) in normalized coordinates.
  std::array<double, 3> affine_x{};
  std::array<double, 3> affine_y{};
  /// Coordinates are normalized as (p - origin) / scale before evaluation.
  Point2 origin;
  double scale = 1.0;
  /// Set when the plain solve failed and the 1e-10 diagonal shift was used.
  bool regularized = false;

  Vec2 evaluate(const Point2& p) const;
};

/// Fits dx and dy independently using only valid anchors.
RbfModel rbf_fit(const DisplacementVectors& vectors);

DeformationField evaluate_grid(const RbfModel& model, const Roi& roi, int rows = kGridSize,
                               int cols = kGridSize);

}  // namespace fv

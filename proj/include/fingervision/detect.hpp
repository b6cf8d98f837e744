#pragma once

#include "fingervision/core.hpp"

namespace fv {

struct DetectorConfig {
  /// Intensity cut in [0, 1]; pixels below it are foreground.
  double threshold = 0.5;
  double min_area = 6.0;
  double max_area = 200.0;
  /// 4*pi*area / perimeter^2, perimeter estimated from crack-edge length.
  double min_circularity = 0.6;

  void validate() const;
};

/// Dark-blob centroids: global threshold, 8-connected components, area and
/// circularity filters, darkness-weighted centroid. Output order follows the
/// raster order of each component's first pixel.
MarkerSet detect_markers(const GrayImage& image, const DetectorConfig& cfg = {});

}  // namespace fv

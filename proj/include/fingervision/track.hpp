#pragma once

// Frame-to-frame marker tracking: each anchor takes the nearest centroid of
// the new frame to its last accepted position, and the match is rejected
// when it lies farther than d_threshold.

#include <vector>

#include "fingervision/core.hpp"

namespace fv {

struct TrackerConfig {
  double d_threshold = 9.0;

  void validate() const;
};

class TrackState {
 public:
  TrackState() = default;

  bool initialized() const { return !init_pos_.empty(); }
  std::size_t size() const { return init_pos_.size(); }
  double d_threshold() const { return d_threshold_; }

  const std::vector<Point2>& init_pos() const { return init_pos_; }
  const std::vector<Point2>& current_pos() const { return current_pos_; }
  const std::vector<bool>& alive() const { return alive_; }

 private:
  friend TrackState track_init(const MarkerSet&, const TrackerConfig&);
  friend TrackState track_update(const TrackState&, const MarkerSet&);

  std::vector<Point2> init_pos_;
  std::vector<Point2> current_pos_;
  std::vector<bool> alive_;
  double d_threshold_ = 0.0;
};

/// First-frame branch: every centroid becomes an anchor.
TrackState track_init(const MarkerSet& markers, const TrackerConfig& cfg = {});

/// One tracking step. Several anchors may claim the same centroid.
/// Equidistant candidates are resolved by the smaller (x, y) pair so the
/// result does not depend on the order of the marker set.
TrackState track_update(const TrackState& state, const MarkerSet& markers);

/// vectors[k] = current_pos[k] - init_pos[k]; validity[k] = alive[k].
DisplacementVectors displacements(const TrackState& state);

/// Index of the nearest point to `query` among `points` within `max_dist`
/// (inclusive), or -1. Uses a uniform bucket grid with cell size max_dist.
class NearestIndex {
 public:
  NearestIndex(const std::vector<Point2>& points, double max_dist);
  int nearest_within(const Point2& query) const;

 private:
  const std::vector<Point2>* points_;
  double max_dist2_;
  double cell_;
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<int> cell_start_;
  std::vector<int> entries_;
};

/// True when a should win a distance tie against b.
inline bool tie_precedes(const Point2& a, const Point2& b) {
  return a.x < b.x || (a.x == b.x && a.y < b.y);
}

}  // namespace fv

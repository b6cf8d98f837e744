#include "fingervision/track.hpp"

#include <algorithm>
#include <cmath>

namespace fv {

void TrackerConfig::validate() const {
  if (!(d_threshold > 0.0) || !std::isfinite(d_threshold)) {
    throw Error(Errc::Config, "tracker d_threshold must be positive");
  }
}

NearestIndex::NearestIndex(const std::vector<Point2>& points, double max_dist)
    : points_(&points), max_dist2_(max_dist * max_dist), cell_(max_dist * (1.0 + 1e-9) + 1e-12) {
  if (points.empty()) return;
  double min_x = points[0].x, max_x = points[0].x;
  double min_y = points[0].y, max_y = points[0].y;
  for (const Point2& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  origin_x_ = min_x;
  origin_y_ = min_y;
  nx_ = static_cast<int>((max_x - min_x) / cell_) + 1;
  ny_ = static_cast<int>((max_y - min_y) / cell_) + 1;

  // Counting sort of points into cells.
  std::vector<int> cell_of(points.size());
  cell_start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const int cx = std::min(nx_ - 1, static_cast<int>((points[i].x - origin_x_) / cell_));
    const int cy = std::min(ny_ - 1, static_cast<int>((points[i].y - origin_y_) / cell_));
    cell_of[i] = cy * nx_ + cx;
    ++cell_start_[cell_of[i] + 1];
  }
  for (std::size_t c = 1; c < cell_start_.size(); ++c) cell_start_[c] += cell_start_[c - 1];
  entries_.resize(points.size());
  std::vector<int> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points.size(); ++i) entries_[fill[cell_of[i]]++] = static_cast<int>(i);
}

int NearestIndex::nearest_within(const Point2& query) const {
  if (entries_.empty()) return -1;
  const auto& pts = *points_;
  const auto clamp_cell = [](double v, int n) {
    return static_cast<int>(std::clamp(std::floor(v), -2.0, static_cast<double>(n + 1)));
  };
  const int qx = clamp_cell((query.x - origin_x_) / cell_, nx_);
  const int qy = clamp_cell((query.y - origin_y_) / cell_, ny_);
  int best = -1;
  double best_d2 = 0.0;
  for (int cy = std::max(0, qy - 1); cy <= std::min(ny_ - 1, qy + 1); ++cy) {
    for (int cx = std::max(0, qx - 1); cx <= std::min(nx_ - 1, qx + 1); ++cx) {
      const int cell = cy * nx_ + cx;
      for (int e = cell_start_[cell]; e < cell_start_[cell + 1]; ++e) {
        const int i = entries_[e];
        const double d2 = squared_distance(query, pts[i]);
        if (d2 > max_dist2_) continue;
        if (best < 0 || d2 < best_d2 || (d2 == best_d2 && tie_precedes(pts[i], pts[best]))) {
          best = i;
          best_d2 = d2;
        }
      }
    }
  }
  return best;
}

TrackState track_init(const MarkerSet& markers, const TrackerConfig& cfg) {
  if (markers.points.empty()) throw Error(Errc::EmptyMarkerSet, "cannot initialize tracking without markers");
  cfg.validate();
  TrackState state;
  state.init_pos_ = markers.points;
  state.current_pos_ = markers.points;
  state.alive_.assign(markers.points.size(), true);
  state.d_threshold_ = cfg.d_threshold;
  return state;
}

TrackState track_update(const TrackState& state, const MarkerSet& markers) {
  if (!state.initialized()) throw Error(Errc::NotInitialized, "track_update before track_init");
  TrackState next = state;
  const NearestIndex index(markers.points, state.d_threshold_);
  for (std::size_t k = 0; k < state.size(); ++k) {
    const int hit = index.nearest_within(state.current_pos_[k]);
    if (hit >= 0) {
      next.current_pos_[k] = markers.points[hit];
      next.alive_[k] = true;
    } else {
      next.alive_[k] = false;
    }
  }
  return next;
}

DisplacementVectors displacements(const TrackState& state) {
  if (!state.initialized()) throw Error(Errc::NotInitialized, "displacements before track_init");
  DisplacementVectors out;
  out.anchors = state.init_pos();
  out.vectors.reserve(state.size());
  for (std::size_t k = 0; k < state.size(); ++k) {
    out.vectors.push_back(state.current_pos()[k] - state.init_pos()[k]);
  }
  out.validity = state.alive();
  return out;
}

}  // namespace fv

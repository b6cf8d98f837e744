#pragma once

// detect -> track -> interpolate, one deformation field per frame.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "fingervision/core.hpp"
#include "fingervision/detect.hpp"
#include "fingervision/interp.hpp"
#include "fingervision/track.hpp"

namespace fv {

struct PipelineSettings {
  DetectorConfig detector;
  TrackerConfig tracker;
  Roi roi;
  int rows = kGridSize;
  int cols = kGridSize;
};

/// Stateful per-sequence processor. The first frame initializes tracking
/// and yields a zero field.
class FieldPipeline {
 public:
  explicit FieldPipeline(PipelineSettings settings);

  DeformationField process(const GrayImage& frame);
  /// Tracking/interpolation half, for callers that detect elsewhere.
  DeformationField process_markers(const MarkerSet& markers);
  void reset();

  const TrackState& state() const { return state_; }
  std::uint64_t frames_processed() const { return frame_index_; }
  const PipelineSettings& settings() const { return settings_; }

 private:
  PipelineSettings settings_;
  TrackState state_;
  std::uint64_t frame_index_ = 0;
};

struct PipelineRun {
  std::vector<DeformationField> fields;
  double seconds = 0.0;
  double fps = 0.0;
};

/// Runs a whole sequence. With `threaded`, detection and tracking run as a
/// two-stage chain joined by a bounded queue; output order and values are
/// identical either way. Timing covers processing only.
PipelineRun run_pipeline(const PipelineSettings& settings, const std::vector<GrayImage>& frames,
                         bool threaded = true);

template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
  }

  /// Empty optional once the queue is closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
};

}  // namespace fv

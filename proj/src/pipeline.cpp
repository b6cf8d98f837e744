#include "fingervision/pipeline.hpp"

#include <chrono>
#include <exception>
#include <thread>

namespace fv {

FieldPipeline::FieldPipeline(PipelineSettings settings) : settings_(std::move(settings)) {
  settings_.detector.validate();
  settings_.tracker.validate();
  if (settings_.roi.width <= 0.0 || settings_.roi.height <= 0.0) {
    throw Error(Errc::Config, "pipeline roi must have positive size");
  }
}

DeformationField FieldPipeline::process(const GrayImage& frame) {
  return process_markers(detect_markers(frame, settings_.detector));
}

DeformationField FieldPipeline::process_markers(const MarkerSet& markers) {
  const std::uint64_t index = frame_index_++;
  try {
    state_ = state_.initialized() ? track_update(state_, markers) : track_init(markers, settings_.tracker);
    return evaluate_grid(rbf_fit(displacements(state_)), settings_.roi, settings_.rows, settings_.cols);
  } catch (const Error& e) {
    throw Error(e.code(), "frame " + std::to_string(index) + ": " + e.what());
  }
}

void FieldPipeline::reset() {
  state_ = TrackState{};
  frame_index_ = 0;
}

PipelineRun run_pipeline(const PipelineSettings& settings, const std::vector<GrayImage>& frames, bool threaded) {
  PipelineRun run;
  run.fields.reserve(frames.size());
  FieldPipeline pipeline(settings);
  const auto start = std::chrono::steady_clock::now();
  if (!threaded) {
    for (const GrayImage& frame : frames) run.fields.push_back(pipeline.process(frame));
  } else {
    BoundedQueue<MarkerSet> queue(4);
    std::exception_ptr detect_error;
    std::thread detector([&] {
      try {
        for (std::size_t i = 0; i < frames.size(); ++i) {
          MarkerSet markers = detect_markers(frames[i], settings.detector);
          markers.frame_index = i;
          queue.push(std::move(markers));
        }
      } catch (...) {
        detect_error = std::current_exception();
      }
      queue.close();
    });
    std::exception_ptr track_error;
    try {
      while (auto markers = queue.pop()) run.fields.push_back(pipeline.process_markers(*markers));
    } catch (...) {
      track_error = std::current_exception();
      queue.close();
    }
    detector.join();
    if (detect_error) std::rethrow_exception(detect_error);
    if (track_error) std::rethrow_exception(track_error);
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.fps = run.seconds > 0.0 ? frames.size() / run.seconds : 0.0;
  return run;
}

}  // namespace fv

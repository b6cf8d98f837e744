#pragma once

// Declarative run configuration loaded from a single JSON file. Every
// section is optional; omitted keys keep their defaults, unknown keys are
// rejected with the offending key path in the message.
//
//   {
//     "seed": 0,
//     "sensor":   {"image_width", "image_height", "marker_rows", "marker_cols",
//                  "marker_spacing_px", "marker_radius_px", "background_level",
//                  "marker_level", "noise_sigma"},
//     "detector": {"threshold", "min_area", "max_area", "min_circularity"},
//     "tracker":  {"d_threshold"},
//     "roi":      {"x", "y", "width", "height"},
//     "net":      {"in_channels", "hidden_channels", "kernel", "height", "width",
//                  "seq_len", "classes"},
//     "profiles": {"sigma_min", ..., "center_jitter"},
//     "dataset":  {"raw_count", "train_ratio", "threads"},
//     "train":    {"steps", "batch", "learning_rate", "eval_every"},
//     "paths":    {"data", "checkpoint", "out"}
//   }

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "fingervision/convlstm.hpp"
#include "fingervision/detect.hpp"
#include "fingervision/pipeline.hpp"
#include "fingervision/slip.hpp"
#include "fingervision/synth.hpp"
#include "fingervision/track.hpp"

namespace fv {

struct DatasetSection {
  std::size_t raw_count = 1600;
  double train_ratio = 0.9;
  unsigned threads = 0;
};

struct TrainSection {
  int steps = 1000;
  int batch = 32;
  double learning_rate = 1e-5;
  int eval_every = 50;
};

struct PathsSection {
  std::string data;
  std::string checkpoint;
  std::string out;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  SensorSpec sensor{.noise_sigma = 0.01};
  DetectorConfig detector;
  TrackerConfig tracker;
  /// Defaults to sensor.default_roi() when absent.
  std::optional<Roi> roi;
  NetConfig net;
  ProfileRanges profiles;
  DatasetSection dataset;
  TrainSection train;
  PathsSection paths;

  Roi grid_roi() const { return roi ? *roi : sensor.default_roi(); }
  void validate() const;

  DatasetOptions dataset_options() const;
  TrainOptions train_options() const;
  PipelineSettings pipeline_settings() const;
};

/// Throws Errc::Config on unknown keys, wrong types or failed validation.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const PipelineConfig& cfg);

}  // namespace fv

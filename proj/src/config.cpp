#include "fingervision/config.hpp"

#include <set>

#include "fingervision/io.hpp"

namespace fv {

using nlohmann::json;

namespace {

/// Reads known keys out of one JSON object and rejects whatever is left.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(Errc::Config, where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw Error(Errc::Config, "bad type for key '" + name(key) + "'");
    }
  }

  std::optional<json> child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return *it;
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.contains(key)) throw Error(Errc::Config, "unknown config key '" + name(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_sensor(const json& j, SensorSpec& s) {
  Section sec(j, "sensor");
  sec.get("image_width", s.image_width);
  sec.get("image_height", s.image_height);
  sec.get("marker_rows", s.marker_rows);
  sec.get("marker_cols", s.marker_cols);
  sec.get("marker_spacing_px", s.marker_spacing_px);
  sec.get("marker_radius_px", s.marker_radius_px);
  sec.get("background_level", s.background_level);
  sec.get("marker_level", s.marker_level);
  sec.get("noise_sigma", s.noise_sigma);
  sec.finish();
}

void read_detector(const json& j, DetectorConfig& d) {
  Section sec(j, "detector");
  sec.get("threshold", d.threshold);
  sec.get("min_area", d.min_area);
  sec.get("max_area", d.max_area);
  sec.get("min_circularity", d.min_circularity);
  sec.finish();
}

void read_tracker(const json& j, TrackerConfig& t) {
  Section sec(j, "tracker");
  sec.get("d_threshold", t.d_threshold);
  sec.finish();
}

Roi read_roi(const json& j) {
  Section sec(j, "roi");
  Roi r;
  sec.get("x", r.x);
  sec.get("y", r.y);
  sec.get("width", r.width);
  sec.get("height", r.height);
  sec.finish();
  return r;
}

void read_net(const json& j, NetConfig& n) {
  Section sec(j, "net");
  sec.get("in_channels", n.in_channels);
  sec.get("hidden_channels", n.hidden_channels);
  sec.get("kernel", n.kernel);
  sec.get("height", n.height);
  sec.get("width", n.width);
  sec.get("seq_len", n.seq_len);
  sec.get("classes", n.classes);
  sec.finish();
}

void read_profiles(const json& j, ProfileRanges& p) {
  Section sec(j, "profiles");
  sec.get("sigma_min", p.sigma_min);
  sec.get("sigma_max", p.sigma_max);
  sec.get("normal_min", p.normal_min);
  sec.get("normal_max", p.normal_max);
  sec.get("tangential_min", p.tangential_min);
  sec.get("tangential_max", p.tangential_max);
  sec.get("torsion_max", p.torsion_max);
  sec.get("slip_speed_min", p.slip_speed_min);
  sec.get("slip_speed_max", p.slip_speed_max);
  sec.get("twist_rate_min", p.twist_rate_min);
  sec.get("twist_rate_max", p.twist_rate_max);
  sec.get("onset_min", p.onset_min);
  sec.get("onset_max", p.onset_max);
  sec.get("center_jitter", p.center_jitter);
  sec.finish();
}

void read_dataset(const json& j, DatasetSection& d) {
  Section sec(j, "dataset");
  sec.get("raw_count", d.raw_count);
  sec.get("train_ratio", d.train_ratio);
  sec.get("threads", d.threads);
  sec.finish();
}

void read_train(const json& j, TrainSection& t) {
  Section sec(j, "train");
  sec.get("steps", t.steps);
  sec.get("batch", t.batch);
  sec.get("learning_rate", t.learning_rate);
  sec.get("eval_every", t.eval_every);
  sec.finish();
}

void read_paths(const json& j, PathsSection& p) {
  Section sec(j, "paths");
  sec.get("data", p.data);
  sec.get("checkpoint", p.checkpoint);
  sec.get("out", p.out);
  sec.finish();
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(Errc::Config, msg);
}

}  // namespace

void PipelineConfig::validate() const {
  try {
    sensor.validate();
    detector.validate();
    tracker.validate();
    net.validate();
  } catch (const Error& e) {
    if (e.code() == Errc::Config) throw;
    throw Error(Errc::Config, e.what());
  }
  const Roi r = grid_roi();
  require(r.width > 0.0 && r.height > 0.0, "roi must have positive width and height");
  require(net.height == kGridSize && net.width == kGridSize,
          "net.height and net.width must match the 30x30 field grid");
  require(net.in_channels == kFieldChannels, "net.in_channels must be 3 (dx, dy, magnitude)");
  require(net.seq_len == kWindowLength, "net.seq_len must equal the window length 10");
  require(net.classes == 2, "net.classes must be 2");
  const ProfileRanges& p = profiles;
  require(0.0 < p.sigma_min && p.sigma_min <= p.sigma_max, "profiles: need 0 < sigma_min <= sigma_max");
  require(p.normal_min <= p.normal_max, "profiles: normal_min > normal_max");
  require(p.tangential_min <= p.tangential_max, "profiles: tangential_min > tangential_max");
  require(p.slip_speed_min <= p.slip_speed_max, "profiles: slip_speed_min > slip_speed_max");
  require(p.twist_rate_min <= p.twist_rate_max, "profiles: twist_rate_min > twist_rate_max");
  require(1 <= p.onset_min && p.onset_min <= p.onset_max && p.onset_max < kRawFrames,
          "profiles: onset range must lie within the raw sequence");
  require(p.center_jitter >= 0.0, "profiles: center_jitter must be non-negative");
  require(dataset.raw_count > 0, "dataset.raw_count must be positive");
  require(dataset.train_ratio > 0.0 && dataset.train_ratio < 1.0, "dataset.train_ratio must be in (0, 1)");
  require(train.steps >= 0, "train.steps must be non-negative");
  require(train.batch > 0, "train.batch must be positive");
  require(train.learning_rate > 0.0, "train.learning_rate must be positive");
  require(train.eval_every >= 0, "train.eval_every must be non-negative");
}

DatasetOptions PipelineConfig::dataset_options() const {
  DatasetOptions o;
  o.sensor = sensor;
  o.detector = detector;
  o.tracker = tracker;
  o.roi = grid_roi();
  o.ranges = profiles;
  o.raw_count = dataset.raw_count;
  o.seed = seed;
  o.threads = dataset.threads;
  return o;
}

TrainOptions PipelineConfig::train_options() const {
  TrainOptions o;
  o.net = net;
  o.steps = train.steps;
  o.batch = train.batch;
  o.learning_rate = train.learning_rate;
  o.eval_every = train.eval_every;
  o.seed = seed;
  return o;
}

PipelineSettings PipelineConfig::pipeline_settings() const {
  PipelineSettings s;
  s.detector = detector;
  s.tracker = tracker;
  s.roi = grid_roi();
  return s;
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig cfg;
  Section top(j, "");
  top.get("seed", cfg.seed);
  if (auto c = top.child("sensor")) read_sensor(*c, cfg.sensor);
  if (auto c = top.child("detector")) read_detector(*c, cfg.detector);
  if (auto c = top.child("tracker")) read_tracker(*c, cfg.tracker);
  if (auto c = top.child("roi")) cfg.roi = read_roi(*c);
  if (auto c = top.child("net")) read_net(*c, cfg.net);
  if (auto c = top.child("profiles")) read_profiles(*c, cfg.profiles);
  if (auto c = top.child("dataset")) read_dataset(*c, cfg.dataset);
  if (auto c = top.child("train")) read_train(*c, cfg.train);
  if (auto c = top.child("paths")) read_paths(*c, cfg.paths);
  top.finish();
  cfg.validate();
  return cfg;
}

PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(Errc::Config, std::string("malformed config: ") + e.what());
  }
  return config_from_json(j);
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return parse_config(text);
  } catch (const Error& e) {
    throw Error(Errc::Config, path.string() + ": " + e.what());
  }
}

json to_json(const PipelineConfig& cfg) {
  const SensorSpec& s = cfg.sensor;
  const ProfileRanges& p = cfg.profiles;
  return {
      {"seed", cfg.seed},
      {"sensor",
       {{"image_width", s.image_width},
        {"image_height", s.image_height},
        {"marker_rows", s.marker_rows},
        {"marker_cols", s.marker_cols},
        {"marker_spacing_px", s.marker_spacing_px},
        {"marker_radius_px", s.marker_radius_px},
        {"background_level", s.background_level},
        {"marker_level", s.marker_level},
        {"noise_sigma", s.noise_sigma}}},
      {"detector",
       {{"threshold", cfg.detector.threshold},
        {"min_area", cfg.detector.min_area},
        {"max_area", cfg.detector.max_area},
        {"min_circularity", cfg.detector.min_circularity}}},
      {"tracker", {{"d_threshold", cfg.tracker.d_threshold}}},
      {"roi", to_json(cfg.grid_roi())},
      {"net", to_json(cfg.net)},
      {"profiles",
       {{"sigma_min", p.sigma_min},
        {"sigma_max", p.sigma_max},
        {"normal_min", p.normal_min},
        {"normal_max", p.normal_max},
        {"tangential_min", p.tangential_min},
        {"tangential_max", p.tangential_max},
        {"torsion_max", p.torsion_max},
        {"slip_speed_min", p.slip_speed_min},
        {"slip_speed_max", p.slip_speed_max},
        {"twist_rate_min", p.twist_rate_min},
        {"twist_rate_max", p.twist_rate_max},
        {"onset_min", p.onset_min},
        {"onset_max", p.onset_max},
        {"center_jitter", p.center_jitter}}},
      {"dataset",
       {{"raw_count", cfg.dataset.raw_count},
        {"train_ratio", cfg.dataset.train_ratio},
        {"threads", cfg.dataset.threads}}},
      {"train",
       {{"steps", cfg.train.steps},
        {"batch", cfg.train.batch},
        {"learning_rate", cfg.train.learning_rate},
        {"eval_every", cfg.train.eval_every}}},
      {"paths", {{"data", cfg.paths.data}, {"checkpoint", cfg.paths.checkpoint}, {"out", cfg.paths.out}}},
  };
}

}  // namespace fv

// fv: command-line front end for the FingerVision pipeline.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data error.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fingervision/config.hpp"
#include "fingervision/io.hpp"
#include "fingervision/pipeline.hpp"
#include "fingervision/slip.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fv;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
};

PipelineConfig load(const Common& c) {
  PipelineConfig cfg = c.config.empty() ? PipelineConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(1) << '\n';
  } else {
    write_file(out, j.dump(1) + "\n");
  }
}

std::vector<fs::path> frame_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::Io, "'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(Errc::Io, "no .pgm frames in '" + dir.string() + "'");
  return files;
}

std::vector<GrayImage> read_frames(const fs::path& dir) {
  std::vector<GrayImage> frames;
  for (const fs::path& p : frame_files(dir)) frames.push_back(read_pgm(p));
  return frames;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%03zu.pgm", i);
  return buf;
}

std::string raw_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "raw_%05zu", i);
  return buf;
}

// ---------------------------------------------------------------------------

void cmd_simulate(const Common& common, std::size_t count, const std::string& out) {
  const PipelineConfig cfg = load(common);
  const DatasetOptions opt = cfg.dataset_options();
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = Rng(cfg.seed).split(i);
    const std::uint64_t stream_seed = rng.seed();
    const MotionKind kind = motion_kind_for(i);
    const MotionProfile profile = make_profile(kind, opt.sensor, opt.ranges, rng);
    const RawRender raw = generate_raw(opt.sensor, profile, opt.roi, rng);
    const fs::path dir = fs::path(out) / raw_dir_name(i);
    for (std::size_t f = 0; f < raw.frames.size(); ++f) write_pgm(dir / frame_name(f), raw.frames[f]);
    write_fvf(dir / "truth.fvf", to_field_tensor(raw.truth));
    json meta = {{"raw_id", i},
                 {"seed", stream_seed},
                 {"kind", to_string(kind)},
                 {"label", static_cast<int>(raw.label)},
                 {"frames", raw.frames.size()},
                 {"frame_rate", kFrameRateHz},
                 {"roi", to_json(opt.roi)}};
    if (const auto onset = slip_onset_frame(profile)) meta["slip_onset_frame"] = *onset;
    write_file(dir / "meta.json", meta.dump(1) + "\n");
    spdlog::debug("simulated {} ({})", dir.string(), to_string(kind));
  }
  spdlog::info("wrote {} raw sample(s) to {}", count, out);
}

void cmd_detect(const Common& common, const std::string& in, const std::string& out) {
  const PipelineConfig cfg = load(common);
  const MarkerSet markers = detect_markers(read_pgm(in), cfg.detector);
  spdlog::info("{}: {} markers", in, markers.points.size());
  emit(to_json(markers), out);
}

void cmd_track(const Common& common, const std::string& in, const std::string& out) {
  const PipelineConfig cfg = load(common);
  const std::vector<fs::path> files = frame_files(in);
  json frames = json::array();
  TrackState state;
  for (std::size_t i = 0; i < files.size(); ++i) {
    MarkerSet markers = detect_markers(read_pgm(files[i]), cfg.detector);
    markers.frame_index = i;
    state = i == 0 ? track_init(markers, cfg.tracker) : track_update(state, markers);
    json entry = to_json(displacements(state));
    entry["frame"] = i;
    entry["valid"] = displacements(state).valid_count();
    frames.push_back(std::move(entry));
  }
  emit({{"frames", frames}}, out);
}

void cmd_pipeline(const Common& common, const std::string& in, const std::string& out) {
  const PipelineConfig cfg = load(common);
  const std::vector<GrayImage> frames = read_frames(in);
  const PipelineRun run = run_pipeline(cfg.pipeline_settings(), frames);
  if (!out.empty()) write_fvf(out, to_field_tensor(run.fields));
  std::cout << json{{"frames", run.fields.size()}, {"seconds", run.seconds}, {"fps", run.fps}}.dump() << '\n';
}

void cmd_dataset(const Common& common, std::optional<std::size_t> count, const std::string& out) {
  PipelineConfig cfg = load(common);
  if (count) cfg.dataset.raw_count = *count;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<RawSample> raws = generate_dataset(cfg.dataset_options());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Rng rng = Rng(cfg.seed).split(kSplitStream);
  const SplitManifests parts = split(build_manifest(raws, cfg.seed), cfg.dataset.train_ratio, rng);
  DatasetManifest manifest = parts.train;
  manifest.records.insert(manifest.records.end(), parts.test.records.begin(), parts.test.records.end());
  std::sort(manifest.records.begin(), manifest.records.end(), [](const SampleRecord& a, const SampleRecord& b) {
    return std::tie(a.raw_id, a.offset) < std::tie(b.raw_id, b.offset);
  });
  write_dataset(out, raws, manifest);
  const DatasetCounts c = manifest.counts();
  spdlog::info("generated {} raw samples in {:.1f} s", raws.size(), secs);
  std::cout << json{{"raw", c.raw}, {"samples", c.samples}, {"slip", c.slip}, {"non_slip", c.non_slip},
                    {"train", c.train}, {"test", c.test}}
                   .dump()
            << '\n';
}

DatasetManifest subset(const DatasetManifest& m, Split which) {
  DatasetManifest out;
  out.seed = m.seed;
  for (const SampleRecord& r : m.records) {
    if (r.split == which) out.records.push_back(r);
  }
  return out;
}

void cmd_train(const Common& common, const std::string& data, std::optional<int> steps, std::optional<int> batch,
               const std::string& out) {
  PipelineConfig cfg = load(common);
  if (steps) cfg.train.steps = *steps;
  if (batch) cfg.train.batch = *batch;
  cfg.validate();
  const DatasetDir ds = read_dataset(data);
  const TensorDataset train_set = make_tensor_dataset(ds.raws, subset(ds.manifest, Split::Train));
  const TensorDataset test_set = make_tensor_dataset(ds.raws, subset(ds.manifest, Split::Test));
  if (train_set.size() == 0 && cfg.train.steps > 0) throw Error(Errc::Data, "dataset has no training samples");
  spdlog::info("training {} steps on {} samples (test {})", cfg.train.steps, train_set.size(), test_set.size());
  const TrainResult result = train(train_set, test_set, cfg.train_options());
  const fs::path dir(out);
  write_checkpoint(dir / "checkpoint.fvck", result.params);
  write_file(dir / "report.json", to_json(result.report).dump(1) + "\n");
  write_file(dir / "report.csv", train_report_csv(result.report));
  std::cout << json{{"final_accuracy", result.report.final_accuracy}, {"wall_clock_s", result.report.wall_clock_s}}
                   .dump()
            << '\n';
}

void cmd_eval(const std::string& data, const std::string& checkpoint, const std::string& which,
              const std::string& out) {
  const NetParams<float> params = read_checkpoint(checkpoint);
  const DatasetDir ds = read_dataset(data);
  const DatasetManifest m = which == "all" ? ds.manifest : subset(ds.manifest, split_from_string(which));
  const EvalResult r = evaluate(params, make_tensor_dataset(ds.raws, m));
  emit(to_json(r), out);
}

void cmd_infer(const std::string& checkpoint, const std::string& in, const std::string& out) {
  const NetParams<float> params = read_checkpoint(checkpoint);
  const FieldTensor fields = read_fvf(in);
  StreamInfer stream(params);
  json rows = json::array();
  const std::vector<DeformationField> seq = to_fields(fields);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::optional<double> p = stream.push(seq[i]);
    json row = {{"frame", i}};
    if (p) {
      row["slip_probability"] = *p;
      row["label"] = *p >= 0.5 ? "slip" : "non-slip";
    } else {
      row["slip_probability"] = nullptr;
      row["label"] = "warming";
    }
    rows.push_back(std::move(row));
  }
  emit({{"frames", rows}}, out);
}

double mean_ms(int reps, const auto& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
}

void cmd_bench(const Common& common, std::optional<int> batch, const std::string& out) {
  const PipelineConfig cfg = load(common);
  const int batch_size = batch ? *batch : cfg.train.batch;
  Rng rng(cfg.seed);
  const NetConfig& net = cfg.net;

  NetParams<float> params = init_params<float>(net, rng);
  std::vector<float> seq(net.sequence_size());
  for (float& v : seq) v = static_cast<float>(rng.normal());
  ConvLstmWorkspace<float> ws(net);
  ws.forward(seq, params);
  const double forward_ms = mean_ms(10, [&] { ws.forward(seq, params); });

  NetParams<float> grads(net);
  AdamState<float> adam(params.values.size(), cfg.train.learning_rate);
  const double train_step_ms = mean_ms(1, [&] {
    std::fill(grads.values.begin(), grads.values.end(), 0.0f);
    for (int b = 0; b < batch_size; ++b) ws.accumulate_gradients(seq, b % 2, params, grads, 1.0f / batch_size);
    adam_step(params, grads, adam);
  });

  const DatasetOptions opt = cfg.dataset_options();
  Rng scene = rng.split(1);
  std::vector<GrayImage> frames;
  for (int rep = 0; frames.size() < 150; ++rep) {
    const MotionProfile profile = make_profile(motion_kind_for(rep), opt.sensor, opt.ranges, scene);
    for (const ContactLoad& load : profile.loads) frames.push_back(render_frame(opt.sensor, load, scene));
  }
  frames.resize(150);
  const PipelineRun run = run_pipeline(cfg.pipeline_settings(), frames);

  emit({{"param_count", param_count(net)},
        {"net", to_json(net)},
        {"forward_ms", forward_ms},
        {"train_step_ms", train_step_ms},
        {"batch", batch_size},
        {"pipeline_fps", run.fps},
        {"pipeline_frames", run.fields.size()}},
       out);
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("fv");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
  const char* level = std::getenv("FV_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"FingerVision deformation-field pipeline and slip classifier"};
  app.require_subcommand(1);

  Common common;
  std::string in, out, data, checkpoint, which = "test";
  std::optional<std::size_t> count;
  std::optional<int> steps, batch;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Override the configured seed");
  };

  auto* simulate = app.add_subcommand("simulate", "Render synthetic raw sequences with ground-truth fields");
  add_common(simulate);
  simulate->add_option("--count", count, "Number of raw sequences (default 1)");
  simulate->add_option("--out", out, "Output directory")->required();

  auto* detect = app.add_subcommand("detect", "Detect marker centroids in one frame");
  add_common(detect);
  detect->add_option("--in", in, "Input PGM frame")->required();
  detect->add_option("--out", out, "Output JSON (default stdout)");

  auto* track = app.add_subcommand("track", "Track markers across a directory of frames");
  add_common(track);
  track->add_option("--in", in, "Directory of PGM frames")->required();
  track->add_option("--out", out, "Output JSON (default stdout)");

  auto* pipeline = app.add_subcommand("pipeline", "Frames to deformation fields (FVF1)");
  add_common(pipeline);
  pipeline->add_option("--in", in, "Directory of PGM frames")->required();
  pipeline->add_option("--out", out, "Output FVF1 file");

  auto* dataset = app.add_subcommand("dataset", "Generate a split slip dataset");
  add_common(dataset);
  dataset->add_option("--count", count, "Number of raw sequences");
  dataset->add_option("--out", out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "Train the ConvLSTM slip classifier");
  add_common(train_cmd);
  train_cmd->add_option("--data", data, "Dataset directory")->required();
  train_cmd->add_option("--steps", steps, "Optimizer steps");
  train_cmd->add_option("--batch", batch, "Batch size");
  train_cmd->add_option("--out", out, "Output directory for checkpoint and reports")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", which, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
  eval->add_option("--out", out, "Output JSON (default stdout)");

  auto* infer = app.add_subcommand("infer", "Rolling slip probability over a field sequence");
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  infer->add_option("--in", in, "FVF1 field sequence")->required();
  infer->add_option("--out", out, "Output JSON (default stdout)");

  auto* bench = app.add_subcommand("bench", "Report latency, throughput and parameter count");
  add_common(bench);
  bench->add_option("--batch", batch, "Batch size for the training-step timing");
  bench->add_option("--out", out, "Output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*simulate) cmd_simulate(common, count.value_or(1), out);
    if (*detect) cmd_detect(common, in, out);
    if (*track) cmd_track(common, in, out);
    if (*pipeline) cmd_pipeline(common, in, out);
    if (*dataset) cmd_dataset(common, count, out);
    if (*train_cmd) cmd_train(common, data, steps, batch, out);
    if (*eval) cmd_eval(data, checkpoint, which, out);
    if (*infer) cmd_infer(checkpoint, in, out);
    if (*bench) cmd_bench(common, batch, out);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.code() == Errc::Config ? 1 : 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}

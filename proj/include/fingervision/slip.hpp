#pragma once

// Slip dataset construction (generation, slicing, raw-granular splitting),
// training/evaluation of the ConvLSTM classifier and streaming inference.

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fingervision/convlstm.hpp"
#include "fingervision/core.hpp"
#include "fingervision/detect.hpp"
#include "fingervision/synth.hpp"
#include "fingervision/track.hpp"

namespace fv {

inline constexpr int kWindowLength = 10;
inline constexpr int kWindowsPerRaw = 5;
/// Stream id split off the dataset seed for the train/test assignment.
inline constexpr std::uint64_t kSplitStream = 0x5eed5b17ULL;

struct RawSample {
  std::vector<DeformationField> frames;
  SlipLabel label = SlipLabel::NonSlip;
  MotionKind kind = MotionKind::NonSlipRampHold;
  std::uint64_t raw_id = 0;
  std::uint64_t seed = 0;
};

/// Windows at offsets 0..4 (frames [0, 9] through [4, 13]).
std::vector<Sample> slice(const RawSample& raw);

struct DatasetOptions {
  SensorSpec sensor;
  DetectorConfig detector;
  TrackerConfig tracker;
  Roi roi;
  ProfileRanges ranges;
  std::size_t raw_count = 1600;
  std::uint64_t seed = 0;
  /// 0 selects std::thread::hardware_concurrency().
  unsigned threads = 0;
};

/// Even raw ids are non-slip; odd ids cycle translational, rotational and
/// incipient slip. Each raw id draws from its own stream split off the seed.
MotionKind motion_kind_for(std::uint64_t raw_id);

/// Renders one raw sample and pushes it through detect -> track -> interpolate.
RawSample generate_raw_sample(const DatasetOptions& options, std::uint64_t raw_id);
std::vector<RawSample> generate_dataset(const DatasetOptions& options);

enum class Split { Unassigned, Train, Test };
const char* to_string(Split split);
Split split_from_string(const std::string& name);

struct SampleRecord {
  std::string path;
  SlipLabel label = SlipLabel::NonSlip;
  std::uint64_t raw_id = 0;
  int offset = 0;
  Split split = Split::Unassigned;
};

struct DatasetCounts {
  std::size_t raw = 0;
  std::size_t samples = 0;
  std::size_t slip = 0;
  std::size_t non_slip = 0;
  std::size_t train = 0;
  std::size_t test = 0;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::uint64_t seed = 0;

  DatasetCounts counts() const;
};

/// Five records per raw sample; `path_of(raw_id)` names the raw's tensor file.
DatasetManifest build_manifest(const std::vector<RawSample>& raws, std::uint64_t seed,
                               const std::string& path_prefix = "raw_");
std::string raw_file_name(std::uint64_t raw_id, const std::string& prefix = "raw_");

struct SplitManifests {
  DatasetManifest train;
  DatasetManifest test;
};

/// Stratified by label, at raw-sample granularity: every window of a raw
/// sample lands on the same side. Per class, round((1 - ratio) * n) raw
/// samples go to test.
SplitManifests split(const DatasetManifest& manifest, double ratio, Rng& rng);

/// Throws Errc::Data when a raw id appears on both sides.
void check_no_leakage(const DatasetManifest& train, const DatasetManifest& test);

/// Raw sequences in network layout [frame, channel, row, col] as float;
/// items reference windows of them.
class TensorDataset {
 public:
  struct Item {
    std::size_t raw_index = 0;
    int offset = 0;
  };

  TensorDataset() = default;
  TensorDataset(int rows, int cols) : rows_(rows), cols_(cols) {}

  /// Appends a raw sample and returns its index.
  std::size_t add_raw(const RawSample& raw);
  void add_item(std::size_t raw_index, int offset) { items_.push_back({raw_index, offset}); }

  std::size_t size() const { return items_.size(); }
  std::size_t raw_count() const { return labels_.size(); }
  std::span<const float> sequence(std::size_t item, int seq_len = kWindowLength) const;
  int label(std::size_t item) const { return labels_[items_[item].raw_index]; }
  const Item& item(std::size_t i) const { return items_[i]; }
  std::uint64_t raw_id(std::size_t raw_index) const { return raw_ids_[raw_index]; }
  std::size_t frame_size() const { return static_cast<std::size_t>(kFieldChannels) * rows_ * cols_; }

 private:
  int rows_ = kGridSize;
  int cols_ = kGridSize;
  std::vector<float> data_;
  std::vector<std::size_t> raw_start_;
  std::vector<int> raw_frames_;
  std::vector<int> labels_;
  std::vector<std::uint64_t> raw_ids_;
  std::vector<Item> items_;
};

/// Channel planes (dx, dy, magnitude) of a field sequence, frame-major.
std::vector<float> to_network_layout(std::span<const DeformationField> frames);

/// Items for the manifest records; raw ids are resolved against `raws`.
TensorDataset make_tensor_dataset(const std::vector<RawSample>& raws, const DatasetManifest& manifest);

struct TrainOptions {
  NetConfig net;
  int steps = 1000;
  int batch = 32;
  double learning_rate = 1e-5;
  int eval_every = 50;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> step_loss;  // mean batch loss, one entry per step
  std::vector<std::pair<int, double>> test_accuracy;  // (step, accuracy)
  double wall_clock_s = 0.0;
  double final_accuracy = 0.0;
  TrainOptions options;
};

struct TrainResult {
  NetParams<float> params;
  TrainReport report;
};

/// Mini-batch Adam on mean cross-entropy. Batches are drawn from a per-epoch
/// shuffle; per-sample gradients are summed in batch order, so the result is
/// bit-reproducible per seed.
TrainResult train(const TensorDataset& train_set, const TensorDataset& test_set, const TrainOptions& options);

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  /// confusion[true][predicted]
  std::array<std::array<std::size_t, 2>, 2> confusion{};
  double wilson_low = 0.0;
  double wilson_high = 0.0;
};

EvalResult evaluate_predictions(std::span<const int> predicted, std::span<const int> truth);
EvalResult evaluate(const NetParams<float>& params, const TensorDataset& test_set);

/// 95% Wilson score interval for k successes out of n.
std::pair<double, double> wilson_interval(std::size_t k, std::size_t n, double z = 1.959963984540054);

/// Rolling-window slip probability over a stream of fields.
class StreamInfer {
 public:
  explicit StreamInfer(const NetParams<float>& params);

  /// std::nullopt while fewer than seq_len frames have arrived ("warming").
  std::optional<double> push(const DeformationField& field);
  void reset();

 private:
  const NetParams<float>* params_;
  ConvLstmWorkspace<float> workspace_;
  std::deque<std::vector<float>> buffer_;
  std::vector<float> sequence_;
};

}  // namespace fv
